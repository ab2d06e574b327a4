import numpy as np
import pytest
from hypothesis import given, strategies as st

from onlinevos.errors import DimensionError, FormatError
from onlinevos.features import (FeatureSpec, PrecomputedFeatureProvider, ToyFeatureProvider,
                                extract_toy_features, load_precomputed_features, raw_toy_features)
from onlinevos.io import write_feature_file


def scene(rng, h=96, w=128):
    img = 0.5 + 0.05 * rng.standard_normal((3, h, w))
    img[:, 30:60, 40:90] = np.array([0.9, 0.2, 0.1])[:, None, None]
    return np.clip(img, 0, 1)


def test_shape_and_determinism(rng):
    img = scene(rng)
    spec = FeatureSpec(channels=64, toy_seed=5)
    a = extract_toy_features(img, spec)
    assert a.shape == (64, 6, 8)
    np.testing.assert_array_equal(a, extract_toy_features(img, spec))


def test_standardized_channels(rng):
    f = extract_toy_features(scene(rng))
    for ch in f:
        if np.all(ch == 0):
            continue
        assert abs(ch.mean()) < 1e-6
        assert abs(ch.var() - 1) < 1e-6


def test_constant_image_has_zero_gradient_energy():
    raw = raw_toy_features(np.full((3, 32, 48), 0.4), FeatureSpec())
    np.testing.assert_array_equal(raw["gradient"], 0.0)
    f = extract_toy_features(np.full((3, 32, 48), 0.4))
    assert np.isfinite(f).all()


def test_brightness_shift(rng):
    img = scene(rng) * 0.8
    a = raw_toy_features(img, FeatureSpec())
    b = raw_toy_features(img + 0.1, FeatureSpec())
    np.testing.assert_allclose(b["color_mean"] - a["color_mean"], 0.1, atol=1e-12)
    np.testing.assert_allclose(b["gradient"], a["gradient"], atol=1e-12)
    np.testing.assert_allclose(b["color_var"], a["color_var"], atol=1e-12)


@given(seed=st.integers(0, 1000))
def test_translation_by_one_cell(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((3, 64, 96))
    shifted = np.roll(img, 16, axis=2)
    a = raw_toy_features(img, FeatureSpec())
    b = raw_toy_features(shifted, FeatureSpec())
    # interior cells only: the gradient stencil reaches one pixel across cell borders
    for key in ("color_mean", "color_var"):
        np.testing.assert_allclose(b[key][:, :, 1:], a[key][:, :, :-1], atol=1e-12)
    np.testing.assert_allclose(b["gradient"][:, 1:-1, 2:-1], a["gradient"][:, 1:-1, 1:-2], atol=1e-12)


def test_undersized_image():
    with pytest.raises(DimensionError):
        extract_toy_features(np.zeros((3, 8, 40)))
    with pytest.raises(DimensionError):
        extract_toy_features(np.zeros((1, 32, 32)))


def test_provider_counts_calls(rng):
    p = ToyFeatureProvider()
    p(scene(rng))
    p(scene(rng))
    assert p.calls == 2 and p.channels == 64


def test_precomputed_round_trip_and_mismatch(tmp_path, rng):
    t = rng.standard_normal((5, 3, 4)).astype(np.float32)
    write_feature_file(tmp_path / "00002.ft", t)
    np.testing.assert_array_equal(load_precomputed_features(tmp_path, 2), t)
    with pytest.raises(DimensionError, match="5.*7"):
        load_precomputed_features(tmp_path, 2, expected_channels=7)
    prov = PrecomputedFeatureProvider(tmp_path, 5)
    assert prov(None, frame_index=2).shape == (5, 3, 4)
    assert not prov.supports_augmentation


def test_precomputed_truncated(tmp_path, rng):
    t = rng.standard_normal((5, 3, 4)).astype(np.float32)
    write_feature_file(tmp_path / "00000.ft", t)
    data = (tmp_path / "00000.ft").read_bytes()
    (tmp_path / "00000.ft").write_bytes(data[:-3])
    with pytest.raises(FormatError):
        load_precomputed_features(tmp_path, 0)


def test_spec_validation():
    with pytest.raises(ValueError):
        FeatureSpec(stride=8)
    with pytest.raises(ValueError):
        FeatureSpec(channels=4)
