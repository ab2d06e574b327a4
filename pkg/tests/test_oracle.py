import numpy as np

from onlinevos.features import STRIDE
from onlinevos.oracle import fit_ridge, oracle_sequence, ridge_scores
from onlinevos.tensor_ops import upsample_bilinear


def test_ridge_matches_normal_equations(rng):
    x = rng.standard_normal((3, 4, 5))
    y = (rng.random((64, 80)) < 0.3).astype(float)
    w = fit_ridge(x, y, lam=0.5)
    # gradient of ||U(Xw) - y||^2 + lam ||w||^2 vanishes at the solution
    resid = upsample_bilinear(ridge_scores(w, x), STRIDE) - y
    cols = [upsample_bilinear(c, STRIDE) for c in np.concatenate([x, np.ones((1, 4, 5))])]
    grad = np.array([np.vdot(c, resid) for c in cols]) + 0.5 * w
    assert np.abs(grad).max() < 1e-8 * max(1.0, np.abs(w).max())


def test_realizable_label_recovered(rng):
    x = rng.standard_normal((3, 4, 5))
    w_true = np.array([0.3, -0.2, 0.5, 0.1])
    y = upsample_bilinear(ridge_scores(w_true, x), STRIDE)
    np.testing.assert_allclose(fit_ridge(x, y, lam=1e-12), w_true, atol=1e-8)


def test_oracle_sequence_keeps_first_frame(rng):
    frames = [np.clip(0.5 + 0.02 * rng.standard_normal((3, 64, 96)), 0, 1) for _ in range(3)]
    for f in frames:
        f[:, 16:40, 20:60] = 0.9
    lab = np.zeros((64, 96), dtype=np.uint8)
    lab[16:40, 20:60] = 1
    out = oracle_sequence(frames, lab)
    assert out[0] is not None and np.array_equal(out[0], lab)
    assert all(o.shape == lab.shape for o in out)
    assert (out[1] == 1).sum() > 0.5 * (lab == 1).sum()
