import numpy as np
import pytest
from hypothesis import given, strategies as st

from onlinevos.errors import DimensionError
from onlinevos.tensor_ops import (apply_gram, convolve, convolve_adjoint_input,
                                  convolve_weight_gradient, interpolation_matrix,
                                  upsample_adjoint, upsample_bilinear, upsample_gram)


def naive_conv(x, k):
    """Direct loop oracle: zero padding, no kernel flip."""
    c, h, w = x.shape
    o, _, kh, _ = k.shape
    r = kh // 2
    xp = np.pad(x, ((0, 0), (r, r), (r, r)))
    out = np.zeros((o, h, w))
    for oc in range(o):
        for i in range(h):
            for j in range(w):
                out[oc, i, j] = np.sum(xp[:, i:i + kh, j:j + kh] * k[oc])
    return out


def naive_upsample_1d(v, f):
    n = len(v)
    out = np.empty(n * f)
    for m in range(n * f):
        src = min(max((m + 0.5) / f - 0.5, 0.0), n - 1)
        lo = int(np.floor(src))
        hi = min(lo + 1, n - 1)
        out[m] = (1 - (src - lo)) * v[lo] + (src - lo) * v[hi]
    return out


dims = st.integers(1, 6)


@given(c=dims, o=dims, h=dims, w=dims, k=st.sampled_from([1, 3]), seed=st.integers(0, 2**16))
def test_convolution_matches_loop_oracle(c, o, h, w, k, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((c, h, w))
    ker = rng.standard_normal((o, c, k, k))
    np.testing.assert_allclose(convolve(x, ker), naive_conv(x, ker), rtol=1e-12, atol=1e-12)


def test_convolution_integer_data_is_exact(rng):
    x = rng.integers(-8, 9, (4, 7, 9)).astype(float)
    ker = rng.integers(-8, 9, (3, 4, 3, 3)).astype(float)
    assert np.array_equal(convolve(x, ker), naive_conv(x, ker))


def test_single_tap_kernel_is_identity(rng):
    x = rng.standard_normal((2, 5, 6))
    ker = np.zeros((2, 2, 3, 3))
    ker[0, 0, 1, 1] = ker[1, 1, 1, 1] = 1.0
    assert np.array_equal(convolve(x, ker), x)


@given(c=dims, o=dims, h=dims, w=dims, k=st.sampled_from([1, 3]), seed=st.integers(0, 2**16))
def test_convolution_adjoints(c, o, h, w, k, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((c, h, w))
    ker = rng.standard_normal((o, c, k, k))
    e = rng.standard_normal((o, h, w))
    lhs = np.vdot(convolve(x, ker), e)
    assert np.isclose(lhs, np.vdot(x, convolve_adjoint_input(e, ker)), rtol=1e-10, atol=1e-12)
    assert np.isclose(lhs, np.vdot(ker, convolve_weight_gradient(x, e, k)), rtol=1e-10, atol=1e-12)


def test_batched_convolution_matches_per_sample(rng):
    x = rng.standard_normal((3, 4, 5, 6))
    ker = rng.standard_normal((2, 4, 3, 3))
    out = convolve(x, ker)
    for n in range(3):
        np.testing.assert_allclose(out[n], convolve(x[n], ker), rtol=1e-13)


def test_convolution_dimension_errors(rng):
    with pytest.raises(DimensionError):
        convolve(rng.standard_normal((3, 4, 4)), rng.standard_normal((1, 2, 3, 3)))
    with pytest.raises(DimensionError):
        convolve(rng.standard_normal((3, 4, 4)), rng.standard_normal((1, 3, 5, 5)))
    with pytest.raises(DimensionError):
        convolve(rng.standard_normal((4, 4)), rng.standard_normal((1, 1, 3, 3)))


def test_upsample_worked_example():
    # 2 -> 8 samples with factor 4, half-pixel centres
    a, b = 2.0, 6.0
    out = upsample_bilinear(np.array([[a, b]]), 4)[0]
    expected = [a, a, a + (b - a) * 0.125, a + (b - a) * 0.375,
                a + (b - a) * 0.625, a + (b - a) * 0.875, b, b]
    np.testing.assert_allclose(out, expected, rtol=1e-15)


def test_upsample_factor_two_example():
    out = upsample_bilinear(np.array([[1.0, 5.0]]), 2)[0]
    np.testing.assert_allclose(out, [1.0, 2.0, 4.0, 5.0])


@given(h=dims, w=dims, f=st.integers(1, 5), seed=st.integers(0, 2**16))
def test_upsample_matches_separable_oracle(h, w, f, seed):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((h, w))
    rows = np.stack([naive_upsample_1d(r, f) for r in s])
    ref = np.stack([naive_upsample_1d(col, f) for col in rows.T]).T
    np.testing.assert_allclose(upsample_bilinear(s, f), ref, rtol=1e-12, atol=1e-12)


@given(h=dims, w=dims, f=st.integers(1, 5), seed=st.integers(0, 2**16))
def test_upsample_adjoint_identity(h, w, f, seed):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((h, w))
    e = rng.standard_normal((h * f, w * f))
    assert np.isclose(np.vdot(upsample_bilinear(s, f), e), np.vdot(s, upsample_adjoint(e, f)),
                      rtol=1e-10, atol=1e-12)


def test_upsample_preserves_constants():
    np.testing.assert_allclose(upsample_bilinear(np.full((3, 4), 2.5), 16), 2.5, rtol=1e-15)


def test_interpolation_rows_sum_to_one():
    a = interpolation_matrix(7, 16)
    np.testing.assert_allclose(a.sum(axis=1), 1.0, rtol=1e-15)
    assert not a.flags.writeable


def test_upsample_adjoint_rejects_indivisible_size():
    with pytest.raises(DimensionError):
        upsample_adjoint(np.zeros((5, 8)), 2)
    with pytest.raises(ValueError):
        upsample_bilinear(np.zeros((2, 2)), 0)


@given(h=dims, w=dims, f=st.integers(1, 4), seed=st.integers(0, 2**16))
def test_gram_bands_match_literal_operator(h, w, f, seed):
    rng = np.random.default_rng(seed)
    m = rng.random((h * f, w * f))
    s = rng.standard_normal((h, w))
    literal = upsample_adjoint(m * upsample_bilinear(s, f), f)
    np.testing.assert_allclose(apply_gram(upsample_gram(m, f), s), literal, rtol=1e-11, atol=1e-12)
