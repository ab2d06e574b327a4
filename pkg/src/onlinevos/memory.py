"""Per-object sample memory with geometric recency weighting and eviction."""

import math
from dataclasses import dataclass, replace
from itertools import count

import numpy as np

from .errors import DimensionError

ORIGINAL = "original"
AUGMENTED = "augmented"
FRAME = "frame"

# raw weights grow by 1/(1-eta) per frame; rescale by an exact power of two well before overflow
_RESCALE_ABOVE = 2.0 ** 600
_RESCALE_BY = 2.0 ** -600


@dataclass(frozen=True, eq=False)
class MemorySample:
    features: np.ndarray
    label: np.ndarray
    weight: float
    raw_weight: float
    kind: str = FRAME
    serial: int = 0
    system: object = None


class SampleMemory:
    """Ordered set of weighted ``(features, label)`` samples.

    Normalized weights always sum to one.  Each appended frame gets a raw
    weight ``1 / (1 - eta)`` times that of the previous frame; when the memory
    is full the sample with the smallest weight (oldest on ties) is dropped
    before the new one is inserted.
    """

    def __init__(self, capacity=80, eta=0.1):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if not 0.0 < eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {eta}")
        self.capacity = int(capacity)
        self.eta = float(eta)
        self._samples = []
        self._last_frame_raw = None
        self._serial = count()

    @classmethod
    def init_from_initial_set(cls, samples, original_index=0, capacity=80, eta=0.1,
                              systems=None):
        """Build a memory from the first-frame set.

        The original sample carries twice the weight of each augmented one, and
        the whole group shares a total raw weight of ``eta`` so that the first
        appended frame continues the recursion from there.
        """
        samples = list(samples)
        if not samples:
            raise ValueError("initial set must contain at least one sample")
        if not 0 <= original_index < len(samples):
            raise ValueError(f"original_index {original_index} out of range")
        if len(samples) > capacity:
            raise ValueError(f"{len(samples)} initial samples exceed capacity {capacity}")
        mem = cls(capacity, eta)
        unit = eta / (len(samples) + 1)
        for i, (features, label) in enumerate(samples):
            raw = 2.0 * unit if i == original_index else unit
            kind = ORIGINAL if i == original_index else AUGMENTED
            system = systems[i] if systems is not None else None
            mem._insert(features, label, raw, kind, system)
        mem._normalize()
        return mem

    def __len__(self):
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples)

    def __getitem__(self, i):
        return self._samples[i]

    @property
    def weights(self):
        return np.array([s.weight for s in self._samples])

    @property
    def raw_weights(self):
        return np.array([s.raw_weight for s in self._samples])

    def _check_shapes(self, features, label):
        if not self._samples:
            return
        ref = self._samples[0]
        if np.shape(label)[-2:] != np.shape(ref.label)[-2:]:
            raise DimensionError(
                f"label size {np.shape(label)[-2:]} differs from memory's {np.shape(ref.label)[-2:]}")
        if np.shape(features) != np.shape(ref.features):
            raise DimensionError(
                f"features {np.shape(features)} differ from memory's {np.shape(ref.features)}")

    def _insert(self, features, label, raw, kind, system):
        self._check_shapes(features, label)
        self._samples.append(MemorySample(features, label, 0.0, raw, kind, next(self._serial), system))

    def _normalize(self):
        total = math.fsum(s.raw_weight for s in self._samples)
        self._samples = [replace(s, weight=s.raw_weight / total) for s in self._samples]

    def _rescale_if_needed(self):
        if self._last_frame_raw is not None and self._last_frame_raw > _RESCALE_ABOVE:
            self._samples = [replace(s, raw_weight=s.raw_weight * _RESCALE_BY) for s in self._samples]
            self._last_frame_raw *= _RESCALE_BY

    def append(self, features, label, system=None):
        """Insert a frame sample; returns the evicted sample, if any."""
        label_arr = np.asarray(label)
        if label_arr.size and (label_arr.min() < 0.0 or label_arr.max() > 1.0):
            raise ValueError("label values must lie in [0, 1]")
        self._check_shapes(features, label)
        base = self.eta if self._last_frame_raw is None else self._last_frame_raw
        raw = base / (1.0 - self.eta)
        evicted = None
        if len(self._samples) >= self.capacity:
            idx = min(range(len(self._samples)),
                      key=lambda i: (self._samples[i].raw_weight, self._samples[i].serial))
            evicted = self._samples.pop(idx)
        self._insert(features, label, raw, FRAME, system)
        self._last_frame_raw = raw
        self._rescale_if_needed()
        self._normalize()
        return evicted

    def snapshot(self):
        """Immutable view in insertion order; later mutations do not affect it."""
        return tuple(self._samples)
