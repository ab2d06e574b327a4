"""Built-in invariant checks run by ``onlinevos selftest``.

Each check returns ``(passed, detail)``.  ``quick`` shrinks the number of
random instances so the suite finishes in a few seconds.
"""

import math
import sys
import time

import numpy as np

from .errors import FormatError
from .io import decode_feature_tensor, decode_pgm, decode_ppm, encode_feature_tensor, encode_pgm, encode_ppm
from .memory import SampleMemory
from .objective import BALANCED_MAX, compute_pixel_weights, loss_gradient, compute_residuals, loss_value
from .optimizer import NormalSystem, conjugate_gradient
from .pipeline import aggregate_multi_object
from .target_model import BOTH, W2_ONLY, TargetModelParams, jacobian_apply, jacobian_transpose_apply
from .tensor_ops import (convolve, convolve_adjoint_input, convolve_weight_gradient,
                         upsample_adjoint, upsample_bilinear)


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def check_adjoints(n=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        c, o, h, w = rng.integers(1, 5, 4) + np.array([0, 0, 2, 2])
        k = int(rng.choice([1, 3]))
        x = rng.standard_normal((c, h, w))
        ker = rng.standard_normal((o, c, k, k))
        e = rng.standard_normal((o, h, w))
        worst = max(worst, _rel(np.vdot(convolve(x, ker), e), np.vdot(x, convolve_adjoint_input(e, ker))))
        worst = max(worst, _rel(np.vdot(convolve(x, ker), e),
                                np.vdot(ker, convolve_weight_gradient(x, e, k))))
        f = int(rng.integers(1, 5))
        s = rng.standard_normal((h, w))
        big = rng.standard_normal((h * f, w * f))
        worst = max(worst, _rel(np.vdot(upsample_bilinear(s, f), big), np.vdot(s, upsample_adjoint(big, f))))
        params = TargetModelParams(rng.standard_normal((2, c, 1, 1)), rng.standard_normal((1, 2, 3, 3)))
        dw = TargetModelParams(rng.standard_normal(params.w1.shape), rng.standard_normal(params.w2.shape))
        es = rng.standard_normal((1, h, w))
        lhs = np.vdot(jacobian_apply(params, x, dw, BOTH), es)
        rhs = jacobian_transpose_apply(params, x, es, BOTH).dot(dw)
        worst = max(worst, _rel(lhs, rhs))
    return worst < 1e-10, f"max relative adjoint error {worst:.2e}"


def check_cg(n=50, seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        m = int(rng.integers(1, 51))
        q = rng.standard_normal((m, m))
        a = q @ q.T + m * np.eye(m)
        b = rng.standard_normal(m)
        x, _ = conjugate_gradient(lambda v: a @ v, b, m)
        ref = np.linalg.solve(a, b)
        worst = max(worst, np.linalg.norm(x - ref) / np.linalg.norm(ref))
    x, _ = conjugate_gradient(lambda v: np.array([[4.0, 1.0], [1.0, 3.0]]) @ v, np.array([1.0, 2.0]), 2)
    ex = np.abs(x - np.array([1 / 11, 7 / 11])).max()
    return worst < 1e-8 and ex < 1e-10, f"max relative error {worst:.2e}, 2x2 error {ex:.2e}"


class _Sample:
    def __init__(self, features, label, weight):
        self.features, self.label, self.weight = features, label, weight
        self.system = None


def _small_problem(rng, c=3, channels=4, h=5, w=6, factor=2, n=2):
    params = TargetModelParams(0.5 * rng.standard_normal((c, channels, 1, 1)),
                               0.5 * rng.standard_normal((1, c, 3, 3)))
    samples = []
    for _ in range(n):
        y = (rng.random((h * factor, w * factor)) < 0.3).astype(float)
        y[0, 0], y[0, 1] = 1.0, 0.0
        samples.append(_Sample(rng.standard_normal((channels, h, w)), y, rng.uniform(0.2, 1.0)))
    return params, samples


def check_gradient(n=20, seed=2):
    rng = np.random.default_rng(seed)
    worst = 0.0
    lam = (0.1, 0.2)
    for i in range(n):
        params, samples = _small_problem(rng)
        for layers in (BOTH, W2_ONLY):
            g = loss_gradient(params, samples, lam, layers).to_vector()
            v = params.to_vector()
            fd = np.zeros_like(v)
            idx = range(v.size) if layers == BOTH else range(params.w1.size, v.size)
            for j in idx:
                h = 1e-5 * max(1.0, abs(v[j]))
                vp, vm = v.copy(), v.copy()
                vp[j] += h
                vm[j] -= h
                fp = loss_value(compute_residuals(params.from_vector(vp), samples, lam))
                fm = loss_value(compute_residuals(params.from_vector(vm), samples, lam))
                fd[j] = (fp - fm) / (2 * h)
            worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    return worst < 1e-4, f"max relative gradient error {worst:.2e}"


def check_convex_step(n=20, seed=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        params, samples = _small_problem(rng)
        sys_ = NormalSystem(params, samples, (0.1, 0.1), W2_ONLY)
        d = sys_.dim
        a = np.column_stack([sys_.apply(e) for e in np.eye(d)])
        b = sys_.negative_gradient()
        # run past n iterations to round-off level; n steps alone lose ~1e-5 to rounding
        x, _ = conjugate_gradient(sys_.apply, b, 4 * d, tol=1e-14)
        ref = np.linalg.solve(a, b)
        worst = max(worst, np.linalg.norm(x - ref) / np.linalg.norm(ref))
    return worst < 1e-9, f"max relative error vs dense solve {worst:.2e}"


def check_memory(n_ops=1000, seed=4, eta=0.1, k_max=80):
    rng = np.random.default_rng(seed)
    feat = np.zeros((1, 1, 1))
    lab = np.zeros((16, 16))
    mem = SampleMemory.init_from_initial_set([(feat, lab)] * 20, 0, k_max, eta)
    init_ok = abs(mem.weights[0] - 2 / 21) < 1e-15 and all(abs(w - 1 / 21) < 1e-15 for w in mem.weights[1:])
    ok = init_ok
    prev = None
    for _ in range(n_ops):
        raw_before = {s.serial: s.raw_weight for s in mem}
        evicted = mem.append(feat, lab)
        if evicted is not None and evicted.raw_weight > min(raw_before.values()):
            ok = False
        newest = mem[len(mem) - 1]
        if prev is not None and prev.serial in {s.serial for s in mem}:
            ratio = newest.raw_weight / prev.raw_weight
            ok &= abs(ratio * (1 - eta) - 1) < 1e-14
        prev = newest
        ok &= len(mem) <= k_max and abs(math.fsum(mem.weights) - 1) < 1e-12
    return bool(ok), f"{n_ops} appends, size {len(mem)}, initial weights ok: {init_ok}"


def check_pixel_weights(n=200, seed=5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for _ in range(n):
        y = (rng.random((16, 16)) < rng.uniform(0.01, 0.99)).astype(float)
        y[0, 0], y[0, 1] = 1.0, 0.0
        pw = compute_pixel_weights(y, 0.1, BALANCED_MAX)
        k = pw.target_influence
        worst = max(worst, abs(pw.target_weight * k + pw.background_weight * (1 - k) - 1))
        if k < 0.1:
            ok &= abs(pw.applied_influence - 0.1) < 1e-12
    return ok and worst < 1e-12, f"max partition error {worst:.2e}"


def check_formats(n=200, seed=6):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((3, 4, 5)).astype(np.float32)
    ok = np.array_equal(decode_feature_tensor(encode_feature_tensor(t)), t)
    img = rng.integers(0, 256, (3, 7, 9), dtype=np.uint8)
    ok &= encode_ppm(decode_ppm(encode_ppm(img))) == encode_ppm(img)
    m = rng.integers(0, 3, (7, 9), dtype=np.uint8)
    ok &= encode_pgm(decode_pgm(encode_pgm(m))) == encode_pgm(m)
    crashes = 0
    for _ in range(n):
        data = bytes(rng.integers(0, 256, int(rng.integers(0, 64)), dtype=np.uint8))
        for dec in (decode_feature_tensor, decode_ppm, decode_pgm):
            try:
                dec(data)
            except FormatError:
                pass
            except Exception:
                crashes += 1
    return bool(ok) and crashes == 0, f"round trips ok: {bool(ok)}, fuzz crashes: {crashes}"


def check_aggregation():
    out = aggregate_multi_object([np.full((2, 2), 0.8)])
    ok = np.allclose(out.probabilities[0], 4 / 4.25, atol=1e-12)
    out = aggregate_multi_object([np.full((2, 2), 0.6), np.full((2, 2), 0.6)])
    ok &= bool((out.labels == 1).all())
    return bool(ok), "single-object odds and tie rule"


CHECKS = [
    ("adjoints", check_adjoints, dict(n=100), dict(n=20)),
    ("conjugate gradient", check_cg, dict(n=50), dict(n=10)),
    ("loss gradient", check_gradient, dict(n=20), dict(n=3)),
    ("w2-only step", check_convex_step, dict(n=20), dict(n=5)),
    ("sample memory", check_memory, dict(n_ops=1000), dict(n_ops=300)),
    ("pixel weights", check_pixel_weights, dict(n=200), dict(n=50)),
    ("file formats", check_formats, dict(n=200), dict(n=50)),
    ("aggregation", check_aggregation, {}, {}),
]


def run_selftest(quick=True, stream=None):
    """Run every check, print one line each and return the number of failures."""
    stream = stream or sys.stdout
    failures = 0
    for name, fn, full_kw, quick_kw in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn(**(quick_kw if quick else full_kw))
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failures += not ok
        stream.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({time.perf_counter() - t0:.1f}s)\n")
    stream.write(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed\n")
    return failures
