"""Dense convolution and bilinear resampling primitives with exact adjoints.

Tensors are plain numpy arrays laid out as ``(channels, height, width)``, or
``(batch, channels, height, width)`` when several samples are processed at
once.  Kernels are ``(out_channels, in_channels, k, k)`` arrays with ``k`` in
{1, 3}.  Convolution follows the deep-learning convention (no kernel flip),
stride 1, zero padding so that the output keeps the input's spatial size.

Bilinear upsampling uses half-pixel centres with border clamping, so it is a
separable linear map ``U = A_h (x) A_w``.  ``upsample_gram`` precomputes the
small banded operator ``U^T diag(m) U`` which lets weighted least-squares
problems on upsampled maps be evaluated at the coarse resolution.
"""

from functools import lru_cache

import numpy as np

from .errors import DimensionError

__all__ = [
    "convolve",
    "convolve_adjoint_input",
    "convolve_weight_gradient",
    "pad_input",
    "convolve_padded",
    "weight_gradient_padded",
    "interpolation_matrix",
    "upsample_bilinear",
    "upsample_adjoint",
    "upsample_gram",
    "apply_gram",
]

_OFFSETS = [(a, b) for a in range(3) for b in range(3)]


def _as_batch(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], False
    if x.ndim == 4:
        return x, True
    raise DimensionError(f"expected a 3-D or 4-D tensor, got shape {x.shape}")


def _check_kernel(k):
    k = np.asarray(k)
    if k.ndim != 4:
        raise DimensionError(f"kernel must be 4-D, got shape {k.shape}")
    if k.shape[2] != k.shape[3] or k.shape[2] not in (1, 3):
        raise DimensionError(f"kernel must be 1x1 or 3x3, got {k.shape[2]}x{k.shape[3]}")
    return k


def pad_input(x):
    """Zero-pad a (batched) tensor by one pixel for repeated 3x3 convolutions."""
    xb, _ = _as_batch(x)
    return np.pad(xb, ((0, 0), (0, 0), (1, 1), (1, 1)))


def convolve_padded(xp, k):
    """3x3 convolution of an already padded batch ``xp`` of shape (N, C, H+2, W+2)."""
    n, c, hp, wp = xp.shape
    o = k.shape[0]
    h, w = hp - 2, wp - 2
    kmat = k.transpose(2, 3, 0, 1).reshape(9 * o, c)
    y = np.matmul(kmat, xp.reshape(n, c, hp * wp)).reshape(n, 3, 3, o, hp, wp)
    out = np.zeros((n, o, h, w), dtype=y.dtype)
    for a, b in _OFFSETS:
        out += y[:, a, b, :, a:a + h, b:b + w]
    return out


def weight_gradient_padded(xp, e):
    """Gradient of <convolve(x, k), e> with respect to a 3x3 kernel ``k``.

    ``xp`` is the padded input batch (N, C, H+2, W+2) and ``e`` the output-side
    batch (N, O, H, W).
    """
    n, c, hp, wp = xp.shape
    o = e.shape[1]
    h, w = hp - 2, wp - 2
    stack = np.zeros((n, 3, 3, o, hp, wp), dtype=np.result_type(xp, e))
    for a, b in _OFFSETS:
        stack[:, a, b, :, a:a + h, b:b + w] = e
    stack = stack.reshape(n, 9 * o, hp * wp)
    g = np.matmul(stack, xp.reshape(n, c, hp * wp).transpose(0, 2, 1)).sum(axis=0)
    return g.reshape(3, 3, o, c).transpose(2, 3, 0, 1)


def convolve(x, k):
    """Same-size, stride-1 convolution (cross-correlation) of ``x`` with ``k``.

    Parameters
    ----------
    x : ndarray
        ``(C, H, W)`` or ``(N, C, H, W)`` input.
    k : ndarray
        ``(O, C, k, k)`` kernel, ``k`` in {1, 3}.

    Returns
    -------
    ndarray
        ``(O, H, W)`` or ``(N, O, H, W)``, matching the batching of ``x``.
    """
    k = _check_kernel(k)
    xb, batched = _as_batch(x)
    if xb.shape[1] != k.shape[1]:
        raise DimensionError(
            f"input has {xb.shape[1]} channels but kernel expects {k.shape[1]}")
    n, c, h, w = xb.shape
    if k.shape[2] == 1:
        out = np.matmul(k[:, :, 0, 0], xb.reshape(n, c, h * w)).reshape(n, -1, h, w)
    else:
        out = convolve_padded(pad_input(xb), k)
    return out if batched else out[0]


def convolve_adjoint_input(e, k):
    """Adjoint of ``convolve(., k)``: maps output-shaped ``e`` back to input shape."""
    k = _check_kernel(k)
    eb, batched = _as_batch(e)
    if eb.shape[1] != k.shape[0]:
        raise DimensionError(
            f"tensor has {eb.shape[1]} channels but kernel produces {k.shape[0]}")
    n, o, h, w = eb.shape
    c = k.shape[1]
    if k.shape[2] == 1:
        out = np.matmul(k[:, :, 0, 0].T, eb.reshape(n, o, h * w)).reshape(n, c, h, w)
    else:
        kmat = k.transpose(2, 3, 1, 0).reshape(9 * c, o)
        t = np.matmul(kmat, eb.reshape(n, o, h * w)).reshape(n, 3, 3, c, h, w)
        up = np.zeros((n, c, h + 2, w + 2), dtype=t.dtype)
        for a, b in _OFFSETS:
            up[:, :, a:a + h, b:b + w] += t[:, a, b]
        out = up[:, :, 1:h + 1, 1:w + 1]
    return out if batched else out[0]


def convolve_weight_gradient(x, e, kernel_size):
    """Adjoint of the map ``k -> convolve(x, k)``, i.e. the kernel gradient.

    Returns ``g`` with ``<convolve(x, dk), e> == <dk, g>`` for every ``dk``.
    """
    xb, _ = _as_batch(x)
    eb, _ = _as_batch(e)
    if xb.shape[0] != eb.shape[0] or xb.shape[2:] != eb.shape[2:]:
        raise DimensionError(
            f"input {xb.shape} and output {eb.shape} do not share batch/spatial size")
    if kernel_size not in (1, 3):
        raise DimensionError(f"kernel_size must be 1 or 3, got {kernel_size}")
    n, c, h, w = xb.shape
    o = eb.shape[1]
    if kernel_size == 1:
        g = np.matmul(eb.reshape(n, o, h * w), xb.reshape(n, c, h * w).transpose(0, 2, 1))
        return g.sum(axis=0)[:, :, None, None]
    return weight_gradient_padded(pad_input(xb), eb)


@lru_cache(maxsize=64)
def _interp_matrix(n, factor):
    m = n * factor
    src = (np.arange(m) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, n - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    frac = src - lo
    a = np.zeros((m, n))
    rows = np.arange(m)
    np.add.at(a, (rows, lo), 1.0 - frac)
    np.add.at(a, (rows, hi), frac)
    a.setflags(write=False)
    return a


def interpolation_matrix(n, factor):
    """1-D half-pixel-centre bilinear interpolation matrix of shape (n*factor, n)."""
    if factor < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {factor}")
    return _interp_matrix(int(n), int(factor))


def upsample_bilinear(s, factor):
    """Bilinearly upsample the spatial axes of ``s`` by an integer ``factor``."""
    if factor < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {factor}")
    s = np.asarray(s)
    if factor == 1:
        return s.copy()
    ah = interpolation_matrix(s.shape[-2], factor)
    aw = interpolation_matrix(s.shape[-1], factor)
    return ah @ s @ aw.T


def upsample_adjoint(e, factor):
    """Adjoint of :func:`upsample_bilinear`."""
    if factor < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {factor}")
    e = np.asarray(e)
    h, w = e.shape[-2:]
    if h % factor or w % factor:
        raise DimensionError(f"size {h}x{w} is not divisible by factor {factor}")
    if factor == 1:
        return e.copy()
    ah = interpolation_matrix(h // factor, factor)
    aw = interpolation_matrix(w // factor, factor)
    return ah.T @ e @ aw


def _band_products(a):
    # column i of result[d + 1] holds a[:, i] * a[:, i + d], zero when i + d is out of range
    n = a.shape[1]
    out = np.zeros((3,) + a.shape)
    out[1] = a * a
    if n > 1:
        out[2, :, :-1] = a[:, :-1] * a[:, 1:]
        out[0, :, 1:] = a[:, 1:] * a[:, :-1]
    return out


def upsample_gram(m, factor):
    """Banded representation of ``U^T diag(m) U`` for a single-channel weight map.

    Parameters
    ----------
    m : ndarray
        ``(H*factor, W*factor)`` non-negative pixel weights.
    factor : int

    Returns
    -------
    ndarray
        ``(3, 3, H, W)`` array ``B`` such that
        ``(U^T diag(m) U s)[i, j] = sum_{di,dj} B[di+1, dj+1, i, j] * s[i+di, j+dj]``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] % factor or m.shape[1] % factor:
        raise DimensionError(f"weight map {m.shape} not divisible by factor {factor}")
    ph = _band_products(interpolation_matrix(m.shape[0] // factor, factor))
    pw = _band_products(interpolation_matrix(m.shape[1] // factor, factor))
    right = np.matmul(m, pw)  # (3, Hf, W)
    return np.matmul(ph.transpose(0, 2, 1)[:, None], right[None])


def apply_gram(bands, s):
    """Apply banded operators from :func:`upsample_gram` to score maps.

    ``bands`` has shape (..., 3, 3, H, W) and ``s`` shape (..., H, W); leading
    axes broadcast.
    """
    h, w = s.shape[-2:]
    pad = [(0, 0)] * (s.ndim - 2) + [(1, 1), (1, 1)]
    sp = np.pad(s, pad)
    out = np.zeros(np.broadcast_shapes(bands.shape[:-4] + (h, w), s.shape))
    for a, b in _OFFSETS:
        out += bands[..., a, b, :, :] * sp[..., a:a + h, b:b + w]
    return out
