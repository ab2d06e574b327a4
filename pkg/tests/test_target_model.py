import numpy as np
import pytest
from hypothesis import given, strategies as st

from onlinevos.errors import DimensionError
from onlinevos.target_model import (BOTH, W2_ONLY, ModelConfig, TargetModelParams, forward,
                                    init_params, jacobian_apply, jacobian_transpose_apply)
from test_tensor_ops import naive_conv


def random_params(rng, c, channels):
    return TargetModelParams(rng.standard_normal((c, channels, 1, 1)),
                             rng.standard_normal((1, c, 3, 3)))


def test_kaiming_std_formula():
    p = init_params(ModelConfig(feature_channels=1024, c=96, init_seed=0))
    assert p.w1.shape == (96, 1024, 1, 1) and p.w2.shape == (1, 96, 3, 3)
    assert abs(np.sqrt(2 / 1024) - 0.04419) < 1e-5
    assert abs(p.w1.std() - np.sqrt(2 / 1024)) < 0.002
    assert abs(p.w2.std() - np.sqrt(2 / (96 * 9))) < 0.004


def test_init_is_deterministic():
    a = init_params(ModelConfig(16, 4, init_seed=3))
    b = init_params(ModelConfig(16, 4, init_seed=3))
    c = init_params(ModelConfig(16, 4, init_seed=4))
    assert np.array_equal(a.w1, b.w1) and np.array_equal(a.w2, b.w2)
    assert not np.array_equal(a.w1, c.w1)


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(8, 9)
    with pytest.raises(ValueError):
        ModelConfig(8, 0)


def test_forward_matches_loop_oracle(rng):
    p = random_params(rng, 3, 5)
    x = rng.standard_normal((5, 6, 7))
    ref = naive_conv(naive_conv(x, p.w1), p.w2)
    np.testing.assert_allclose(forward(p, x), ref, rtol=1e-12, atol=1e-12)


def test_zero_w2_gives_zero_scores(rng):
    p = random_params(rng, 3, 5)
    p = TargetModelParams(p.w1, np.zeros_like(p.w2))
    assert not forward(p, rng.standard_normal((5, 4, 4))).any()


def test_forward_is_linear_in_w2(rng):
    p = random_params(rng, 3, 5)
    x = rng.standard_normal((5, 4, 6))
    q = TargetModelParams(p.w1, rng.standard_normal(p.w2.shape))
    mix = TargetModelParams(p.w1, 2.0 * p.w2 - 0.5 * q.w2)
    np.testing.assert_allclose(forward(mix, x), 2.0 * forward(p, x) - 0.5 * forward(q, x),
                               rtol=1e-12, atol=1e-12)


def test_channel_mismatch_raises(rng):
    with pytest.raises(DimensionError):
        forward(random_params(rng, 2, 5), rng.standard_normal((4, 3, 3)))


@given(seed=st.integers(0, 2**16), layers=st.sampled_from([BOTH, W2_ONLY]))
def test_jacobian_adjoint(seed, layers):
    rng = np.random.default_rng(seed)
    p = random_params(rng, 3, 4)
    x = rng.standard_normal((4, 5, 6))
    dw = random_params(rng, 3, 4)
    e = rng.standard_normal((1, 5, 6))
    lhs = np.vdot(jacobian_apply(p, x, dw, layers), e)
    assert np.isclose(lhs, jacobian_transpose_apply(p, x, e, layers).dot(dw), rtol=1e-10, atol=1e-12)


def test_jacobian_central_difference(rng):
    p = random_params(rng, 3, 4)
    x = rng.standard_normal((4, 5, 6))
    dw = random_params(rng, 3, 4)
    h = 1e-6
    fd = (forward(p + h * dw, x) - forward(p - h * dw, x)) / (2 * h)
    jd = jacobian_apply(p, x, dw)
    assert np.linalg.norm(fd - jd) / np.linalg.norm(jd) < 1e-4


def test_w2_only_adjoint_has_zero_w1_slot(rng):
    p = random_params(rng, 2, 3)
    g = jacobian_transpose_apply(p, rng.standard_normal((3, 4, 4)), rng.standard_normal((1, 4, 4)), W2_ONLY)
    assert not g.w1.any() and g.w2.any()


def test_params_vector_roundtrip(rng):
    p = random_params(rng, 2, 3)
    q = p.from_vector(p.to_vector())
    assert np.array_equal(q.w1, p.w1) and np.array_equal(q.w2, p.w2)
    assert p.size == 2 * 3 + 2 * 9
    with pytest.raises((ValueError, DimensionError)):
        TargetModelParams(np.zeros((2, 3, 1, 1)), np.zeros((1, 3, 3, 3)))
