"""Procedural test sequences with exact ground truth.

Targets are ellipses or rectangles moving along a line with a sinusoidal
wobble and a geometric scale drift.  Distractors share the look of a target
at a controlled colour distance.  The background is a smooth seeded texture,
and a global brightness drift is applied per frame.
"""

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import GenerationError
from .io import encode_pgm, encode_ppm, to_uint8

ELLIPSE = "ellipse"
RECTANGLE = "rectangle"
TIERS = ("easy", "medium", "hard")


@dataclass(frozen=True)
class ObjectTrack:
    shape: str
    color: tuple
    radii: tuple  # (ry, rx) at frame 0, pixels
    start: tuple  # (y, x) centre at frame 0
    velocity: tuple  # pixels per frame
    wobble_amplitude: tuple
    wobble_period: float
    wobble_phase: float
    scale_drift: float  # size factor reached at the last frame

    def state(self, t, frames):
        frac = t / max(frames - 1, 1)
        s = self.scale_drift ** frac
        w = math.sin(2.0 * math.pi * t / self.wobble_period + self.wobble_phase)
        cy = self.start[0] + self.velocity[0] * t + self.wobble_amplitude[0] * w
        cx = self.start[1] + self.velocity[1] * t + self.wobble_amplitude[1] * w
        return (cy, cx), (self.radii[0] * s, self.radii[1] * s)


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Generation parameters; every random choice is derived from ``seed``."""

    seed: int = 0
    frames: int = 60
    width: int = 640
    height: int = 384
    objects: int = 1
    shapes: tuple = (ELLIPSE, RECTANGLE)
    radius_range: tuple = (40.0, 70.0)
    speed: float = 1.0  # mean pixels per frame
    wobble: float = 6.0  # pixels
    scale_drift: float = 1.0
    distractors: int = 0
    distractor_chroma: float = 0.5  # RGB distance from the mimicked target, >= 0
    target_chroma_min: float = 0.45  # minimum RGB distance of a target from the background tint
    texture_amplitude: float = 0.04
    brightness_drift: float = 0.0  # additive change per frame
    noise: float = 0.01
    max_attempts: int = 200

    def __post_init__(self):
        if self.frames < 1 or self.width < 16 or self.height < 16:
            raise ValueError("need at least one frame of at least 16x16 pixels")
        if self.objects < 1 or self.objects > 254:
            raise ValueError(f"object count must lie in [1, 254], got {self.objects}")
        if self.distractors < 0 or self.distractor_chroma < 0:
            raise ValueError("distractor count and chroma distance must be non-negative")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad radius range {self.radius_range}")
        if self.scale_drift <= 0:
            raise ValueError("scale_drift must be positive")


def tier_spec(tier, seed, frames=60, **overrides):
    """Preset spec for a difficulty tier.

    easy: distinct colours, slow motion, no distractors.
    medium: one distractor at moderate colour distance, brightness and scale drift.
    hard: near-identical distractor, fast motion, scale drift x2.
    """
    rng = np.random.default_rng([seed, 7])
    n_obj = int(rng.integers(1, 3))
    if tier == "easy":
        kw = dict(objects=n_obj, speed=1.0, wobble=5.0, scale_drift=1.1)
    elif tier == "medium":
        kw = dict(objects=n_obj, speed=2.0, wobble=8.0, scale_drift=1.4, distractors=1,
                  distractor_chroma=0.3, brightness_drift=0.003)
    elif tier == "hard":
        kw = dict(objects=n_obj, speed=5.0, wobble=15.0, scale_drift=2.0, distractors=2,
                  distractor_chroma=0.05, brightness_drift=0.004, radius_range=(30.0, 50.0))
    else:
        raise ValueError(f"unknown tier {tier!r}; expected one of {TIERS}")
    kw.update(overrides)
    return SyntheticSceneSpec(seed=seed, frames=frames, **kw)


# --------------------------------------------------------------------------
# rasterization

def _pixel_grid(h, w):
    return np.mgrid[0:h, 0:w].astype(np.float64) + 0.5


def shape_mask(shape, center, radii, h, w):
    """Pixels whose centres fall inside the shape."""
    yy, xx = _pixel_grid(h, w)
    dy = (yy - center[0]) / radii[0]
    dx = (xx - center[1]) / radii[1]
    if shape == ELLIPSE:
        return dy * dy + dx * dx <= 1.0
    if shape == RECTANGLE:
        return (np.abs(dy) <= 1.0) & (np.abs(dx) <= 1.0)
    raise ValueError(f"unknown shape {shape!r}")


def analytic_area(shape, radii):
    if shape == ELLIPSE:
        return math.pi * radii[0] * radii[1]
    return 4.0 * radii[0] * radii[1]


def analytic_perimeter(shape, radii):
    a, b = radii
    if shape == RECTANGLE:
        return 4.0 * (a + b)
    hh = ((a - b) / (a + b)) ** 2
    return math.pi * (a + b) * (1.0 + 3.0 * hh / (10.0 + math.sqrt(4.0 - 3.0 * hh)))


def _inside_fraction(center, radii, h, w):
    # fraction of the bounding box inside the frame; a conservative proxy for the shape
    y0, y1 = center[0] - radii[0], center[0] + radii[0]
    x0, x1 = center[1] - radii[1], center[1] + radii[1]
    iy = max(0.0, min(y1, h) - max(y0, 0.0))
    ix = max(0.0, min(x1, w) - max(x0, 0.0))
    return iy * ix / ((y1 - y0) * (x1 - x0))


# --------------------------------------------------------------------------
# scene construction

def _random_color(rng, avoid, min_dist):
    for _ in range(1000):
        c = rng.uniform(0.05, 0.95, 3)
        if all(np.linalg.norm(c - a) >= min_dist for a in avoid):
            return c
    raise GenerationError(f"no colour at distance >= {min_dist} from {len(avoid)} others")


def _offset_color(rng, base, dist):
    if dist == 0:
        return np.array(base)
    for _ in range(1000):
        d = rng.standard_normal(3)
        c = np.asarray(base) + dist * d / np.linalg.norm(d)
        if (c >= 0).all() and (c <= 1).all():
            return c
    raise GenerationError(f"no in-gamut colour at distance {dist} from {tuple(base)}")


def _tracks_ok(tracks, spec):
    h, w = spec.height, spec.width
    for t in range(spec.frames):
        states = [tr.state(t, spec.frames) for tr in tracks]
        for (c, r) in states:
            if min(r) < 2.0 or _inside_fraction(c, r, h, w) < 0.5:
                return False
        for i in range(len(states)):
            for j in range(i + 1, len(states)):
                (ci, ri), (cj, rj) = states[i], states[j]
                # keep bounding boxes apart so no target ever occludes another
                if abs(ci[0] - cj[0]) < ri[0] + rj[0] + 4 and abs(ci[1] - cj[1]) < ri[1] + rj[1] + 4:
                    return False
    return True


def _draw_track(rng, spec, shape, color):
    h, w = spec.height, spec.width
    ry, rx = rng.uniform(*spec.radius_range, size=2)
    ang = rng.uniform(0, 2 * math.pi)
    spd = spec.speed * rng.uniform(0.5, 1.5)
    wob_ang = rng.uniform(0, 2 * math.pi)
    return ObjectTrack(shape=shape, color=tuple(float(v) for v in color), radii=(ry, rx),
                       start=(rng.uniform(0, h), rng.uniform(0, w)),
                       velocity=(spd * math.sin(ang), spd * math.cos(ang)),
                       wobble_amplitude=(spec.wobble * math.sin(wob_ang), spec.wobble * math.cos(wob_ang)),
                       wobble_period=float(rng.uniform(20.0, 40.0)),
                       wobble_phase=float(rng.uniform(0, 2 * math.pi)),
                       scale_drift=spec.scale_drift)


@dataclass
class Scene:
    spec: SyntheticSceneSpec
    background_color: np.ndarray
    targets: list
    distractors: list
    texture: np.ndarray = field(repr=False)


def build_scene(spec):
    """Draw colours, shapes and motion paths; raises GenerationError if placement fails."""
    rng = np.random.default_rng([spec.seed, 1])
    bg_color = rng.uniform(0.3, 0.7, 3)
    colors = []
    for _ in range(spec.objects):
        colors.append(_random_color(rng, [bg_color] + colors, spec.target_chroma_min))
    shapes = [spec.shapes[int(rng.integers(len(spec.shapes)))] for _ in range(spec.objects)]

    for _ in range(spec.max_attempts):
        tracks = [_draw_track(rng, spec, s, c) for s, c in zip(shapes, colors)]
        if _tracks_ok(tracks, spec):
            break
    else:
        raise GenerationError(f"could not place {spec.objects} object(s) in "
                              f"{spec.width}x{spec.height} after {spec.max_attempts} attempts")

    distractors = []
    for k in range(spec.distractors):
        mimic = colors[k % len(colors)]
        color = _offset_color(rng, mimic, spec.distractor_chroma)
        shape = shapes[k % len(shapes)]
        for _ in range(spec.max_attempts):
            tr = _draw_track(rng, spec, shape, color)
            if _tracks_ok([tr], spec):
                break
        else:
            raise GenerationError(f"could not place distractor {k}")
        distractors.append(tr)

    h, w = spec.height, spec.width
    yy, xx = _pixel_grid(h, w)
    tex = np.zeros((3, h, w))
    for _ in range(4):
        fy, fx = rng.uniform(0.5, 4.0, 2) * 2 * math.pi
        ph = rng.uniform(0, 2 * math.pi)
        tex += rng.uniform(-1, 1, (3, 1, 1)) * np.sin(fy * yy / h + fx * xx / w + ph)
    tex *= spec.texture_amplitude / 4.0
    return Scene(spec, bg_color, tracks, distractors, tex)


def render_frame(scene, t):
    """Frame ``t`` as a uint8 (3, H, W) image and a uint8 (H, W) label map."""
    spec = scene.spec
    h, w = spec.height, spec.width
    img = scene.background_color[:, None, None] + scene.texture
    for tr in scene.distractors:
        c, r = tr.state(t, spec.frames)
        m = shape_mask(tr.shape, c, r, h, w)
        img = np.where(m[None], np.asarray(tr.color)[:, None, None], img)
    labels = np.zeros((h, w), dtype=np.uint8)
    for oid, tr in enumerate(scene.targets, start=1):
        c, r = tr.state(t, spec.frames)
        m = shape_mask(tr.shape, c, r, h, w)
        img = np.where(m[None], np.asarray(tr.color)[:, None, None], img)
        labels[m] = oid
    img = img + spec.brightness_drift * t
    if spec.noise > 0:
        img = img + spec.noise * np.random.default_rng([spec.seed, 2, t]).standard_normal(img.shape)
    return to_uint8(img), labels


def render_sequence(spec):
    """All frames and label maps of a scene, in memory."""
    scene = build_scene(spec)
    frames, labels = [], []
    for t in range(spec.frames):
        f, l = render_frame(scene, t)
        frames.append(f)
        labels.append(l)
    return frames, labels


def write_sequence(spec, root):
    """Write ``frames/`` and ``masks/`` for every frame under ``root``."""
    root = Path(root)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    frames, labels = render_sequence(spec)
    for t, (f, l) in enumerate(zip(frames, labels)):
        (root / "frames" / f"{t:05d}.ppm").write_bytes(encode_ppm(f))
        (root / "masks" / f"{t:05d}.pgm").write_bytes(encode_pgm(l))
    return root


def with_seed(spec, seed):
    return replace(spec, seed=seed)
