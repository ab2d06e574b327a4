"""Weighted, regularized least-squares loss for the target model.

For a memory of samples ``(x_k, y_k, gamma_k)`` the loss is

    sum_k gamma_k * || v_k * (y_k - U(D(x_k))) ||^2  +  sum_j lambda_j * ||w_j||^2

where ``U`` upsamples scores to label resolution and ``v_k`` balances target
against background pixels.  The functions here evaluate that expression
literally at label resolution.  :func:`prepare_label` additionally condenses
each label into coarse-resolution terms so the solver never has to touch
full-resolution maps.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMaskError, DimensionError
from .target_model import BOTH, W2_ONLY, TargetModelParams, forward, jacobian_transpose_apply
from .tensor_ops import upsample_adjoint, upsample_bilinear, upsample_gram

BALANCED_MAX = "balanced_max"
LITERAL_MIN = "literal_min"
WEIGHT_RULES = (BALANCED_MAX, LITERAL_MIN)

DEFAULT_KAPPA_MIN = 0.1
DEFAULT_LAMBDAS = (1e-2, 1e-2)


@dataclass(frozen=True)
class PixelWeightMask:
    v: np.ndarray
    target_influence: float
    applied_influence: float
    target_weight: float
    background_weight: float


@dataclass(frozen=True)
class ResidualSet:
    data_residuals: list
    reg_residuals: tuple

    def count(self):
        return sum(r.size for r in self.data_residuals) + sum(r.size for r in self.reg_residuals)


def _label_2d(y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 3 and y.shape[0] == 1:
        y = y[0]
    if y.ndim != 2:
        raise DimensionError(f"label must be single-channel, got shape {y.shape}")
    return y


def compute_pixel_weights(y, kappa_min=DEFAULT_KAPPA_MIN, rule=BALANCED_MAX, threshold=0.5):
    """Two-valued weight mask balancing target and background influence.

    ``kappa_hat`` is the target fraction of ``y``.  The applied influence is
    ``max(kappa_min, kappa_hat)`` under ``balanced_max`` and
    ``min(kappa_min, kappa_hat)`` under ``literal_min``.  Target pixels get
    ``kappa / kappa_hat`` and background pixels ``(1 - kappa) / (1 - kappa_hat)``.
    Soft labels are split into target/background at ``threshold``.
    """
    if not 0.0 < kappa_min < 1.0:
        raise ValueError(f"kappa_min must lie in (0, 1), got {kappa_min}")
    if rule not in WEIGHT_RULES:
        raise ValueError(f"unknown pixel weight rule {rule!r}")
    target = _label_2d(y) >= threshold
    kappa_hat = target.mean()
    if kappa_hat <= 0.0 or kappa_hat >= 1.0:
        raise DegenerateMaskError(
            f"mask target fraction is {kappa_hat}; weights need both target and background")
    kappa = max(kappa_min, kappa_hat) if rule == BALANCED_MAX else min(kappa_min, kappa_hat)
    tw = kappa / kappa_hat
    bw = (1.0 - kappa) / (1.0 - kappa_hat)
    v = np.where(target, tw, bw)
    return PixelWeightMask(v, float(kappa_hat), float(kappa), float(tw), float(bw))


def _scale_factor(features, label):
    fh, fw = np.shape(features)[-2:]
    lh, lw = label.shape
    if lh % fh or lw % fw or lh // fh != lw // fw:
        raise DimensionError(f"label {label.shape} is not an integer upscaling of features {(fh, fw)}")
    return lh // fh


def compute_residuals(params, samples, lambdas=DEFAULT_LAMBDAS, rule=BALANCED_MAX,
                      kappa_min=DEFAULT_KAPPA_MIN):
    """Residual blocks whose squared norm is the loss.

    ``samples`` is any iterable of objects with ``features``, ``label`` and
    ``weight`` attributes (e.g. :class:`~onlinevos.memory.MemorySample`).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("at least one sample is required")
    data = []
    for smp in samples:
        if smp.weight < 0:
            raise ValueError(f"sample weight must be non-negative, got {smp.weight}")
        y = _label_2d(smp.label)
        factor = _scale_factor(smp.features, y)
        v = compute_pixel_weights(y, kappa_min, rule).v
        pred = upsample_bilinear(forward(params, np.asarray(smp.features, dtype=np.float64)), factor)[0]
        data.append(np.sqrt(smp.weight) * v * (y - pred))
    lam1, lam2 = lambdas
    reg = (np.sqrt(lam1) * params.w1, np.sqrt(lam2) * params.w2)
    return ResidualSet(data, reg)


def loss_value(residuals):
    """Sum of squared residual entries."""
    total = 0.0
    for r in list(residuals.data_residuals) + list(residuals.reg_residuals):
        total += float(np.sum(np.square(r)))
    return total


def loss_gradient(params, samples, lambdas=DEFAULT_LAMBDAS, layers=BOTH, rule=BALANCED_MAX,
                  kappa_min=DEFAULT_KAPPA_MIN):
    """Analytic gradient ``2 J^T r`` of the loss, evaluated at label resolution.

    With ``layers='w2_only'`` the ``w1`` slot is zero.
    """
    grad = params.zeros_like()
    for smp in samples:
        y = _label_2d(smp.label)
        factor = _scale_factor(smp.features, y)
        v = compute_pixel_weights(y, kappa_min, rule).v
        x = np.asarray(smp.features, dtype=np.float64)
        pred = upsample_bilinear(forward(params, x), factor)[0]
        back = upsample_adjoint(smp.weight * v * v * (y - pred), factor)[None]
        grad = grad - 2.0 * jacobian_transpose_apply(params, x, back, layers)
    lam1, lam2 = lambdas
    reg = TargetModelParams(2.0 * lam1 * params.w1, 2.0 * lam2 * params.w2)
    if layers == W2_ONLY:
        reg = TargetModelParams(np.zeros_like(params.w1), reg.w2)
    return grad + reg


@dataclass(frozen=True, eq=False)
class LabelSystem:
    """Label-side terms of one sample, condensed to score resolution.

    With ``m = v**2`` and ``s`` the coarse score map,
    ``||v * (y - U s)||^2 = const - 2 <s, rhs> + <s, G s>`` where
    ``G = U^T diag(m) U`` is stored as 3x3 bands.
    """

    weights: PixelWeightMask
    bands: np.ndarray
    rhs: np.ndarray
    const: float
    factor: int
    kappa_min: float
    rule: str


def prepare_label(label, factor, kappa_min=DEFAULT_KAPPA_MIN, rule=BALANCED_MAX,
                  on_degenerate="raise", threshold=0.5):
    """Precompute the coarse-resolution quadratic terms for one label map.

    ``on_degenerate='uniform'`` substitutes unit weights when the label has no
    target (or no background) pixels instead of raising.
    """
    y = _label_2d(label)
    try:
        weights = compute_pixel_weights(y, kappa_min, rule, threshold)
    except DegenerateMaskError:
        if on_degenerate != "uniform":
            raise
        kh = float((y >= threshold).mean())
        weights = PixelWeightMask(np.ones_like(y), kh, kh, 1.0, 1.0)
    m = weights.v * weights.v
    bands = upsample_gram(m, factor)
    rhs = upsample_adjoint(m * y, factor)
    const = float(np.sum(m * y * y))
    return LabelSystem(weights, bands, rhs, const, int(factor), kappa_min, rule)
