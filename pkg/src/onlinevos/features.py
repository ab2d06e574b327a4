"""Stride-16 feature sources: a deterministic hand-built extractor and file ingestion."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

STRIDE = 16
TOY = "toy"
PRECOMPUTED = "precomputed"

_ORIENTATIONS = np.deg2rad([0.0, 45.0, 90.0, 135.0])
_BASE_CHANNELS = 6 + len(_ORIENTATIONS) + 2
_SUBCELL = 4  # random filters run on a 4x-downsampled image, then pool 4x4


@dataclass(frozen=True)
class FeatureSpec:
    channels: int = 64
    stride: int = STRIDE
    source: str = TOY
    toy_seed: int = 0

    def __post_init__(self):
        if self.stride != STRIDE:
            raise ValueError(f"feature stride must be {STRIDE}, got {self.stride}")
        if self.channels <= 0:
            raise ValueError(f"channels must be positive, got {self.channels}")
        if self.source not in (TOY, PRECOMPUTED):
            raise ValueError(f"unknown feature source {self.source!r}")
        if self.source == TOY and self.channels < _BASE_CHANNELS:
            raise ValueError(f"toy features need at least {_BASE_CHANNELS} channels")


def _cell_mean(a, cell):
    *lead, h, w = a.shape
    return a.reshape(*lead, h // cell, cell, w // cell, cell).mean(axis=(-3, -1))


def _filter_bank(n, seed):
    rng = np.random.default_rng(seed)
    bank = rng.standard_normal((n, 3 * 9))
    bank -= bank.mean(axis=1, keepdims=True)
    return bank


def raw_toy_features(image, spec):
    """Unstandardized toy features, grouped by kind.

    Returns a dict with ``color_mean`` (3), ``color_var`` (3), ``gradient``
    (4 orientation energies), ``coords`` (2) and ``random`` (remaining)
    channel blocks, each at 1/16 resolution.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DimensionError(f"toy features need a (3, H, W) image, got {img.shape}")
    _, h, w = img.shape
    if h < STRIDE or w < STRIDE:
        raise DimensionError(f"image {h}x{w} is smaller than one {STRIDE}px cell")
    h16, w16 = h // STRIDE * STRIDE, w // STRIDE * STRIDE
    img = img[:, :h16, :w16]

    ch, cw = h16 // STRIDE, w16 // STRIDE
    cells = img.reshape(3, ch, STRIDE, cw, STRIDE)
    mean = cells.mean(axis=(2, 4))
    dev = cells - mean[:, :, None, :, None]
    var = (dev * dev).mean(axis=(2, 4))

    gray = img.mean(axis=0)
    gy, gx = np.gradient(gray)
    # (gx cos t + gy sin t)^2 expanded so only three cell averages are needed
    gxx, gyy, gxy = (_cell_mean(a, STRIDE) for a in (gx * gx, gy * gy, gx * gy))
    grad = np.stack([np.cos(t) ** 2 * gxx + np.sin(t) ** 2 * gyy + 2 * np.cos(t) * np.sin(t) * gxy
                     for t in _ORIENTATIONS])

    yy, xx = np.meshgrid((np.arange(ch) + 0.5) / ch, (np.arange(cw) + 0.5) / cw, indexing="ij")
    coords = np.stack([xx, yy])

    n_rand = spec.channels - _BASE_CHANNELS
    if n_rand > 0:
        small = _cell_mean(img, _SUBCELL)
        sp = np.pad(small, ((0, 0), (1, 1), (1, 1)))
        sh, sw = small.shape[1:]
        patches = np.stack([sp[:, a:a + sh, b:b + sw] for a in range(3) for b in range(3)], axis=1)
        resp = _filter_bank(n_rand, spec.toy_seed) @ patches.reshape(27, -1)
        resp = np.maximum(resp, 0.0).reshape(n_rand, sh, sw)
        rand = _cell_mean(resp, STRIDE // _SUBCELL)
    else:
        rand = np.zeros((0, ch, cw))
    return {"color_mean": mean, "color_var": var, "gradient": grad, "coords": coords,
            "random": rand}


def standardize(features, eps=1e-8):
    """Per-channel zero mean, unit variance; constant channels become zero."""
    f = np.asarray(features, dtype=np.float64)
    mu = f.mean(axis=(1, 2), keepdims=True)
    centered = f - mu
    sd = np.sqrt((centered ** 2).mean(axis=(1, 2), keepdims=True))
    scale = np.where(sd > eps * np.maximum(1.0, np.abs(mu)), sd, np.inf)
    return centered / scale


def extract_toy_features(image, spec=None):
    """Deterministic ``(spec.channels, H/16, W/16)`` feature map of an RGB image.

    Cell colour statistics, oriented gradient energies, normalized coordinates
    and rectified responses of a seeded random 3x3 filter bank, each channel
    standardized over the frame.
    """
    spec = spec or FeatureSpec()
    parts = raw_toy_features(image, spec)
    stacked = np.concatenate([parts["color_mean"], parts["color_var"], parts["gradient"],
                              parts["coords"], parts["random"]])
    return standardize(stacked)


def load_precomputed_features(path, frame_index=None, expected_channels=None):
    """Read a ``.ft`` tensor file; ``path`` may be a directory of ``NNNNN.ft`` files."""
    from pathlib import Path

    from .io import read_feature_file

    p = Path(path)
    if p.is_dir():
        if frame_index is None:
            raise ValueError("frame_index is required when reading from a directory")
        p = p / f"{frame_index:05d}.ft"
    feats = read_feature_file(p)
    if expected_channels is not None and feats.shape[0] != expected_channels:
        raise DimensionError(
            f"{p}: file declares {feats.shape[0]} channels but engine expects {expected_channels}")
    return feats.astype(np.float64)


class ToyFeatureProvider:
    """Callable wrapper around :func:`extract_toy_features` that counts calls."""

    supports_augmentation = True

    def __init__(self, spec=None):
        self.spec = spec or FeatureSpec()
        self.calls = 0

    @property
    def channels(self):
        return self.spec.channels

    def __call__(self, image, frame_index=None):
        self.calls += 1
        return extract_toy_features(image, self.spec)


class PrecomputedFeatureProvider:
    """Serves ``NNNNN.ft`` files from a directory, one per real frame.

    Augmented first-frame images have no precomputed counterpart, so this
    provider reports ``supports_augmentation = False`` and the engine then
    trains the initial model on the original frame alone.
    """

    supports_augmentation = False

    def __init__(self, directory, channels):
        self.directory = directory
        self._channels = channels
        self.calls = 0

    @property
    def channels(self):
        return self._channels

    def __call__(self, image, frame_index=None):
        if frame_index is None:
            raise ValueError("precomputed features can only be served for numbered frames")
        self.calls += 1
        return load_precomputed_features(self.directory, frame_index, self._channels)
