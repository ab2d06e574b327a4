"""The factorized two-layer target model and its linearization.

The model maps a feature map ``x`` to coarse target scores through a 1x1
projection to ``c`` channels followed by a single-output 3x3 scorer, with no
biases or nonlinearities.  Because it is bilinear in the two kernels, its
Jacobian with respect to the parameters is cheap to apply in both directions.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor_ops import convolve, convolve_adjoint_input, convolve_weight_gradient

BOTH = "both"
W2_ONLY = "w2_only"
LAYER_MODES = (BOTH, W2_ONLY)


@dataclass(frozen=True)
class ModelConfig:
    feature_channels: int
    c: int = 96
    init_seed: int = 0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.c > self.feature_channels:
            raise ValueError(
                f"c={self.c} exceeds feature_channels={self.feature_channels}")


@dataclass(frozen=True, eq=False)
class TargetModelParams:
    """Kernels of the target model.

    ``w1`` has shape ``(c, feature_channels, 1, 1)`` and ``w2`` has shape
    ``(1, c, 3, 3)``.  The same container also carries perturbations and
    gradients, so it supports the vector-space operations the solver needs.
    """

    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        w1, w2 = np.asarray(self.w1), np.asarray(self.w2)
        if w1.ndim != 4 or w1.shape[2:] != (1, 1):
            raise DimensionError(f"w1 must be (c, C, 1, 1), got {w1.shape}")
        if w2.ndim != 4 or w2.shape[0] != 1 or w2.shape[2:] != (3, 3):
            raise DimensionError(f"w2 must be (1, c, 3, 3), got {w2.shape}")
        if w1.shape[0] != w2.shape[1]:
            raise DimensionError(
                f"w1 produces {w1.shape[0]} channels but w2 expects {w2.shape[1]}")

    @property
    def c(self):
        return self.w1.shape[0]

    @property
    def feature_channels(self):
        return self.w1.shape[1]

    @property
    def size(self):
        return self.w1.size + self.w2.size

    def to_vector(self):
        return np.concatenate([self.w1.ravel(), self.w2.ravel()])

    def from_vector(self, v):
        """Build a same-shaped parameter set from a flat vector."""
        n1 = self.w1.size
        v = np.asarray(v, dtype=np.float64)
        return TargetModelParams(v[:n1].reshape(self.w1.shape).copy(),
                                 v[n1:].reshape(self.w2.shape).copy())

    def zeros_like(self):
        return TargetModelParams(np.zeros_like(self.w1, dtype=np.float64),
                                 np.zeros_like(self.w2, dtype=np.float64))

    def dot(self, other):
        return float(np.vdot(self.w1, other.w1) + np.vdot(self.w2, other.w2))

    def __add__(self, other):
        return TargetModelParams(self.w1 + other.w1, self.w2 + other.w2)

    def __sub__(self, other):
        return TargetModelParams(self.w1 - other.w1, self.w2 - other.w2)

    def __mul__(self, alpha):
        return TargetModelParams(alpha * self.w1, alpha * self.w2)

    __rmul__ = __mul__


def init_params(cfg):
    """Kaiming-normal initialization: std = sqrt(2 / fan_in) per layer."""
    rng = np.random.default_rng(cfg.init_seed)
    fan1 = cfg.feature_channels
    fan2 = cfg.c * 9
    w1 = rng.normal(0.0, np.sqrt(2.0 / fan1), size=(cfg.c, cfg.feature_channels, 1, 1))
    w2 = rng.normal(0.0, np.sqrt(2.0 / fan2), size=(1, cfg.c, 3, 3))
    return TargetModelParams(w1, w2)


def _check_features(params, x):
    x = np.asarray(x)
    if x.ndim not in (3, 4) or x.shape[-3] != params.feature_channels:
        raise DimensionError(
            f"features of shape {x.shape} do not match model expecting "
            f"{params.feature_channels} channels")
    return x


def forward(params, x):
    """Coarse scores ``w2 * (w1 * x)``; one output channel at feature resolution."""
    x = _check_features(params, x)
    return convolve(convolve(x, params.w1), params.w2)


def jacobian_apply(params, x, dw, layers=BOTH):
    """Directional derivative of :func:`forward` at ``params`` along ``dw``."""
    x = _check_features(params, x)
    if layers not in LAYER_MODES:
        raise ValueError(f"unknown layer mode {layers!r}")
    z = convolve(x, params.w1)
    out = convolve(z, dw.w2)
    if layers == BOTH:
        out = out + convolve(convolve(x, dw.w1), params.w2)
    return out


def jacobian_transpose_apply(params, x, e, layers=BOTH):
    """Adjoint of :func:`jacobian_apply`; returns a parameter-shaped gradient."""
    x = _check_features(params, x)
    if layers not in LAYER_MODES:
        raise ValueError(f"unknown layer mode {layers!r}")
    e = np.asarray(e)
    if e.shape[-3] != 1 or e.shape[-2:] != x.shape[-2:] or e.ndim != x.ndim:
        raise DimensionError(f"score-shaped tensor expected, got {e.shape} for features {x.shape}")
    z = convolve(x, params.w1)
    g2 = convolve_weight_gradient(z, e, 3)
    if layers == BOTH:
        g1 = convolve_weight_gradient(x, convolve_adjoint_input(e, params.w2), 1)
    else:
        g1 = np.zeros(params.w1.shape)
    return TargetModelParams(g1, g2)
