"""Gauss-Newton with a conjugate-gradient inner solver for the target model loss.

Each Gauss-Newton step linearizes the residuals around the current
parameters and minimizes the resulting quadratic model with a fixed budget of
CG iterations, starting from a zero increment.  The normal operator
``J^T J + Lambda`` is only ever applied, never formed.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NumericalBreakdownError
from .objective import (BALANCED_MAX, DEFAULT_KAPPA_MIN, DEFAULT_LAMBDAS, prepare_label,
                        _label_2d, _scale_factor)
from .target_model import BOTH, LAYER_MODES, W2_ONLY, TargetModelParams
from .tensor_ops import (apply_gram, convolve, convolve_adjoint_input, convolve_padded,
                         convolve_weight_gradient, pad_input, weight_gradient_padded)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    n_gn: int = 5
    n_cgi: int = 5
    n_cg: int = 10
    n_cgu: int = 10
    lambdas: tuple = DEFAULT_LAMBDAS
    cg_tolerance: float = 0.0
    kappa_min: float = DEFAULT_KAPPA_MIN
    pixel_weight_rule: str = BALANCED_MAX

    def __post_init__(self):
        for name in ("n_gn", "n_cgi", "n_cg", "n_cgu"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.cg_tolerance < 0:
            raise ValueError("cg_tolerance must be non-negative")
        if len(self.lambdas) != 2 or min(self.lambdas) < 0:
            raise ValueError(f"lambdas must be two non-negative values, got {self.lambdas}")

    def schedule(self):
        """CG budgets of the first-frame optimization, one entry per GN step."""
        return [self.n_cgi] + [self.n_cg] * (self.n_gn - 1)

    def update_schedule(self):
        return [self.n_cgu]


def conjugate_gradient(A, b, max_iter, tol=0.0):
    """Solve ``A x = b`` for a symmetric positive (semi)definite operator ``A``.

    Starts from ``x = 0`` and runs at most ``max_iter`` iterations, stopping
    early once ``||r|| <= tol * ||b||``.

    Returns
    -------
    x : ndarray
    iterations : int
        Number of iterations actually performed.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    r = b.copy()
    rs = float(r @ r)
    if not np.isfinite(rs):
        raise NumericalBreakdownError("right-hand side is not finite")
    b_norm = np.sqrt(rs)
    if b_norm == 0.0:
        return x, 0
    p = r.copy()
    it = 0
    for it in range(1, max_iter + 1):
        ap = np.asarray(A(p), dtype=np.float64)
        pap = float(p @ ap)
        if not np.isfinite(pap):
            raise NumericalBreakdownError(f"non-finite curvature at CG iteration {it}")
        if pap <= 0.0:
            # null or negative direction of a semidefinite operator; x is already optimal on the span
            it -= 1
            break
        alpha = rs / pap
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if not np.isfinite(rs_new):
            raise NumericalBreakdownError(f"non-finite residual at CG iteration {it}")
        if np.sqrt(rs_new) <= tol * b_norm:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, it


def _systems_for(samples, kappa_min, rule):
    systems = []
    for smp in samples:
        sys = smp.system
        if sys is None or sys.kappa_min != kappa_min or sys.rule != rule:
            y = _label_2d(smp.label)
            sys = prepare_label(y, _scale_factor(smp.features, y), kappa_min, rule)
        systems.append(sys)
    return systems


class NormalSystem:
    """Linearized least-squares problem of one Gauss-Newton step.

    Holds the stacked memory and the current parameters.  Vectors are flat
    arrays over all parameters (``layers='both'``) or over ``w2`` alone
    (``layers='w2_only'``).
    """

    def __init__(self, params, samples, lambdas=DEFAULT_LAMBDAS, layers=BOTH,
                 kappa_min=DEFAULT_KAPPA_MIN, rule=BALANCED_MAX, systems=None):
        if layers not in LAYER_MODES:
            raise ValueError(f"unknown layer mode {layers!r}")
        samples = list(samples)
        if not samples:
            raise ValueError("memory is empty")
        if systems is None:
            systems = _systems_for(samples, kappa_min, rule)
        self.layers = layers
        self.lambdas = tuple(float(v) for v in lambdas)
        self.x = np.stack([np.asarray(s.features, dtype=np.float64) for s in samples])
        self.gamma = np.array([s.weight for s in samples], dtype=np.float64)
        self.bands = np.stack([s.bands for s in systems])
        self.rhs = np.stack([s.rhs for s in systems])
        self.const = np.array([s.const for s in systems])
        self.set_params(params)

    def set_params(self, params):
        self.params = params
        self._z = convolve(self.x, params.w1)
        self._zp = pad_input(self._z)

    # parameter-vector helpers
    @property
    def dim(self):
        return self.params.w2.size if self.layers == W2_ONLY else self.params.size

    def to_params(self, v):
        if self.layers == W2_ONLY:
            return TargetModelParams(np.zeros_like(self.params.w1),
                                     np.asarray(v).reshape(self.params.w2.shape))
        return self.params.from_vector(v)

    def to_vector(self, p):
        return p.w2.ravel().copy() if self.layers == W2_ONLY else p.to_vector()

    # operators
    def scores(self, params=None):
        if params is None:
            params = self.params
        if params.w1 is self.params.w1:
            return convolve_padded(self._zp, params.w2)[:, 0]
        return convolve(convolve(self.x, params.w1), params.w2)[:, 0]

    def jvp(self, dw):
        """Score-map perturbation ``J_D dw`` for every sample, shape (N, h, w)."""
        out = convolve_padded(self._zp, dw.w2)
        if self.layers == BOTH:
            out = out + convolve(convolve(self.x, dw.w1), self.params.w2)
        return out[:, 0]

    def vjp(self, e):
        """Adjoint of :meth:`jvp` for score-shaped ``e`` of shape (N, h, w)."""
        e4 = e[:, None]
        g2 = weight_gradient_padded(self._zp, e4)
        if self.layers == BOTH:
            g1 = convolve_weight_gradient(self.x, convolve_adjoint_input(e4, self.params.w2), 1)
        else:
            g1 = np.zeros_like(self.params.w1)
        return TargetModelParams(g1, g2)

    def apply(self, v):
        """Normal operator ``(J^T J + Lambda) v``."""
        dw = self.to_params(v)
        s = self.jvp(dw)
        e = self.gamma[:, None, None] * apply_gram(self.bands, s)
        g = self.vjp(e)
        lam1, lam2 = self.lambdas
        if self.layers == BOTH:
            g = g + TargetModelParams(lam1 * dw.w1, lam2 * dw.w2)
        else:
            g = TargetModelParams(g.w1, g.w2 + lam2 * dw.w2)
        return self.to_vector(g)

    def negative_gradient(self):
        """``-J^T r``: the right-hand side of the Gauss-Newton normal equations."""
        s = self.scores()
        e = self.gamma[:, None, None] * (self.rhs - apply_gram(self.bands, s))
        g = self.vjp(e)
        lam1, lam2 = self.lambdas
        g = g - TargetModelParams(lam1 * self.params.w1, lam2 * self.params.w2)
        return self.to_vector(g)

    def loss(self, params=None):
        """Loss value, evaluated through the condensed label terms."""
        p = self.params if params is None else params
        s = self.scores(p)
        data = self.const - 2.0 * np.sum(s * self.rhs, axis=(1, 2)) \
            + np.sum(s * apply_gram(self.bands, s), axis=(1, 2))
        lam1, lam2 = self.lambdas
        return float(self.gamma @ data + lam1 * np.sum(p.w1 ** 2) + lam2 * np.sum(p.w2 ** 2))

    def model_value(self, v):
        """Quadratic model ``dw^T J^T J dw + 2 dw^T J^T r + r^T r`` at increment ``v``."""
        v = np.asarray(v)
        return float(v @ self.apply(v) - 2.0 * v @ self.negative_gradient() + self.loss())


def gauss_newton_step(params, samples, cfg, cg_iters, layers=BOTH, sink=None, system=None,
                      step_index=0):
    """One Gauss-Newton step.

    Returns
    -------
    params : TargetModelParams
        Updated parameters ``w + dw``.
    loss_before, loss_after : float
    """
    if system is None:
        system = NormalSystem(params, samples, cfg.lambdas, layers, cfg.kappa_min,
                              cfg.pixel_weight_rule)
    elif system.params is not params:
        system.set_params(params)
    loss_before = system.loss()
    b = system.negative_gradient()
    dv, used = conjugate_gradient(system.apply, b, cg_iters, cfg.cg_tolerance)
    new = params + system.to_params(dv) if layers == BOTH else \
        TargetModelParams(params.w1, params.w2 + dv.reshape(params.w2.shape))
    loss_after = system.loss(new)
    record = {"gn_step": step_index, "cg_iterations": used,
              "loss_before": loss_before, "loss_after": loss_after}
    log.debug("GN step %(gn_step)d: %(cg_iterations)d CG its, loss %(loss_before).6g -> "
              "%(loss_after).6g", record)
    if sink is not None:
        sink(record)
    return new, loss_before, loss_after


def optimize(params, samples, cfg, layers=BOTH, schedule=None, sink=None):
    """Run Gauss-Newton steps with the given CG budgets.

    ``schedule`` defaults to ``cfg.schedule()``; update-time callers pass
    ``cfg.update_schedule()`` together with ``layers='w2_only'``.
    """
    if schedule is None:
        schedule = cfg.schedule()
    samples = list(samples)
    system = NormalSystem(params, samples, cfg.lambdas, layers, cfg.kappa_min,
                          cfg.pixel_weight_rule)
    for i, iters in enumerate(schedule):
        params, _, _ = gauss_newton_step(params, samples, cfg, iters, layers, sink, system, i)
    return params
