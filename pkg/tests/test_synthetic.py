import numpy as np
import pytest
from hypothesis import given, strategies as st

from onlinevos.errors import GenerationError
from onlinevos.synthetic import (ELLIPSE, RECTANGLE, SyntheticSceneSpec, analytic_area,
                                 analytic_perimeter, build_scene, render_frame, render_sequence,
                                 shape_mask, tier_spec, write_sequence)


def small(seed=0, **kw):
    base = dict(frames=4, width=128, height=96, radius_range=(12.0, 20.0))
    base.update(kw)
    return SyntheticSceneSpec(seed=seed, **base)


def test_same_seed_byte_identical(tmp_path):
    spec = small(3, objects=2, distractors=1)
    a = write_sequence(spec, tmp_path / "a")
    b = write_sequence(spec, tmp_path / "b")
    for sub in ("frames", "masks"):
        fa = sorted((a / sub).iterdir())
        fb = sorted((b / sub).iterdir())
        assert [p.name for p in fa] == [p.name for p in fb]
        assert all(x.read_bytes() == y.read_bytes() for x, y in zip(fa, fb))


def test_different_seeds_differ():
    fa, _ = render_sequence(small(1))
    fb, _ = render_sequence(small(2))
    assert not np.array_equal(fa[0], fb[0])


def test_single_frame():
    frames, labels = render_sequence(small(frames=1))
    assert len(frames) == 1 and labels[0].max() == 1
    assert frames[0].shape == (3, 96, 128) and frames[0].dtype == np.uint8


@given(ry=st.floats(5, 60), rx=st.floats(5, 60), cy=st.floats(60, 70), cx=st.floats(60, 70))
def test_rasterized_area_within_perimeter(ry, rx, cy, cx):
    for shape in (ELLIPSE, RECTANGLE):
        m = shape_mask(shape, (cy, cx), (ry, rx), 140, 140)
        assert abs(m.sum() - analytic_area(shape, (ry, rx))) <= analytic_perimeter(shape, (ry, rx))


def test_circle_perimeter():
    assert analytic_perimeter(ELLIPSE, (10.0, 10.0)) == pytest.approx(2 * np.pi * 10.0)


@pytest.mark.parametrize("tier", ["easy", "medium", "hard"])
def test_tier_constraints(tier):
    spec = tier_spec(tier, 4, frames=30)
    scene = build_scene(spec)
    h, w = spec.height, spec.width
    for t in range(0, spec.frames, 5):
        _, lab = render_frame(scene, t)
        for oid, tr in enumerate(scene.targets, start=1):
            c, r = tr.state(t, spec.frames)
            area = analytic_area(tr.shape, r)
            assert (lab == oid).sum() >= 0.5 * area - analytic_perimeter(tr.shape, r)
    assert len(scene.distractors) == {"easy": 0, "medium": 1, "hard": 2}[tier]
    if tier != "easy":
        d = np.linalg.norm(np.subtract(scene.distractors[0].color, scene.targets[0].color))
        assert d == pytest.approx(spec.distractor_chroma)


def test_objects_do_not_overlap():
    spec = tier_spec("easy", 0, objects=2)
    _, labels = render_sequence(spec)
    for l in labels:
        assert set(np.unique(l)) <= {0, 1, 2}
        assert (l == 1).any() and (l == 2).any()


def test_unsatisfiable_placement():
    with pytest.raises(GenerationError):
        build_scene(small(objects=6, radius_range=(40.0, 45.0), max_attempts=5))


def test_spec_validation():
    with pytest.raises(ValueError):
        small(objects=0)
    with pytest.raises(ValueError):
        small(radius_range=(5.0, 2.0))
    with pytest.raises(ValueError):
        tier_spec("extreme", 0)
