"""First-frame augmentation: cut the target out, inpaint, warp, blur, paste back."""

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateMaskError, DimensionError

_KNOWN, _BAND, _INSIDE = 0, 1, 2


@dataclass(frozen=True)
class AffineParams:
    rotation: float = 0.0  # radians
    scale: float = 1.0
    translation: tuple = (0.0, 0.0)  # (x, y) in pixels
    shear: float = 0.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def matrix_xy(self):
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        rot = np.array([[c, -s], [s, c]])
        shear = np.array([[1.0, self.shear], [0.0, 1.0]])
        return self.scale * rot @ shear


@dataclass(frozen=True)
class AugmentationConfig:
    count: int = 20
    rotation_range: tuple = (-math.radians(25.0), math.radians(25.0))
    scale_range: tuple = (0.8, 1.3)
    translation_range: tuple = (-0.1, 0.1)  # fraction of image width / height
    shear_range: tuple = (-0.1, 0.1)
    blur_sigma_range: tuple = (0.5, 2.0)
    seed: int = 0
    inpaint_radius: int = 5

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        for name in ("rotation_range", "scale_range", "translation_range", "shear_range",
                     "blur_sigma_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is not ordered: {lo} > {hi}")
        if self.scale_range[0] <= 0 or self.blur_sigma_range[0] < 0:
            raise ValueError("scale must stay positive and blur non-negative")

    def draw(self, rng, size):
        """Draw warp parameters and a blur sigma uniformly from the configured ranges."""
        h, w = size
        tx = rng.uniform(*self.translation_range) * w
        ty = rng.uniform(*self.translation_range) * h
        params = AffineParams(rotation=rng.uniform(*self.rotation_range),
                              scale=rng.uniform(*self.scale_range),
                              translation=(tx, ty),
                              shear=rng.uniform(*self.shear_range))
        return params, rng.uniform(*self.blur_sigma_range)


def _mask_2d(mask, shape):
    m = np.asarray(mask)
    if m.ndim == 3 and m.shape[0] == 1:
        m = m[0]
    if m.shape != tuple(shape):
        raise DimensionError(f"mask {m.shape} does not match image size {tuple(shape)}")
    return m > 0.5


def _image_3d(image):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3:
        raise DimensionError(f"image must be (C, H, W), got {img.shape}")
    return img


def _eikonal(t, flag, i, j):
    h, w = flag.shape
    best = math.inf
    vert = [t[i + d, j] for d in (-1, 1) if 0 <= i + d < h and flag[i + d, j] != _INSIDE]
    horz = [t[i, j + d] for d in (-1, 1) if 0 <= j + d < w and flag[i, j + d] != _INSIDE]
    a = min(vert) if vert else math.inf
    b = min(horz) if horz else math.inf
    if math.isinf(a) and math.isinf(b):
        return best
    if math.isinf(a) or math.isinf(b) or abs(a - b) >= 1.0:
        return min(a, b) + 1.0
    return 0.5 * (a + b + math.sqrt(2.0 - (a - b) ** 2))


def _axis_gradient(arr, flag, i, j, axis):
    # central difference where both sides are known, one-sided otherwise
    h, w = flag.shape
    di, dj = (1, 0) if axis == 0 else (0, 1)
    fwd = 0 <= i + di < h and 0 <= j + dj < w and flag[i + di, j + dj] != _INSIDE
    bwd = 0 <= i - di < h and 0 <= j - dj < w and flag[i - di, j - dj] != _INSIDE
    if fwd and bwd:
        return 0.5 * (arr[..., i + di, j + dj] - arr[..., i - di, j - dj])
    if fwd:
        return arr[..., i + di, j + dj] - arr[..., i, j]
    if bwd:
        return arr[..., i, j] - arr[..., i - di, j - dj]
    return 0.0 * arr[..., i, j]


def inpaint_background(image, mask, radius=5):
    """Fill the masked region with the fast-marching method of Telea.

    Pixels are filled in order of increasing distance from the hole boundary.
    Each fill is a weighted average over already-known pixels within
    ``radius`` (direction, distance and level-set weights), using each known
    pixel's first-order extrapolation, clamped to the range of the pixels that
    contributed.  Pixels outside the mask are returned unchanged.

    Parameters
    ----------
    image : ndarray
        ``(C, H, W)`` image.
    mask : ndarray
        ``(H, W)`` or ``(1, H, W)`` binary hole mask.
    """
    img = _image_3d(image)
    hole = _mask_2d(mask, img.shape[1:])
    out = img.copy()
    if not hole.any():
        return out
    if hole.all():
        raise DegenerateMaskError("mask covers the whole image; nothing to inpaint from")
    h, w = hole.shape
    flag = np.where(hole, _INSIDE, _KNOWN).astype(np.int8)
    t = np.where(hole, 1e6, 0.0)
    grown = ndimage.binary_dilation(hole, structure=ndimage.generate_binary_structure(2, 1))
    heap = [(0.0, int(i), int(j)) for i, j in zip(*np.nonzero(grown & ~hole))]
    for _, i, j in heap:
        flag[i, j] = _BAND
    heapq.heapify(heap)

    r = int(radius)
    offs = [(di, dj) for di in range(-r, r + 1) for dj in range(-r, r + 1)
            if 0 < di * di + dj * dj <= r * r]
    offs = np.array(offs)

    while heap:
        _, i, j = heapq.heappop(heap)
        if flag[i, j] == _KNOWN:
            continue
        flag[i, j] = _KNOWN
        for ni, nj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if not (0 <= ni < h and 0 <= nj < w) or flag[ni, nj] != _INSIDE:
                continue
            t[ni, nj] = _eikonal(t, flag, ni, nj)
            _fill_pixel(out, flag, t, ni, nj, offs)
            flag[ni, nj] = _BAND
            heapq.heappush(heap, (t[ni, nj], ni, nj))
    return out


def _gradients_at(arr, flag, qi, qj, axis):
    """Vectorized :func:`_axis_gradient` of a (C, H, W) array at many pixels."""
    h, w = flag.shape
    di, dj = (1, 0) if axis == 0 else (0, 1)
    fi, fj, bi, bj = qi + di, qj + dj, qi - di, qj - dj
    fin = (fi < h) & (fj < w)
    bin_ = (bi >= 0) & (bj >= 0)
    fi, fj = np.minimum(fi, h - 1), np.minimum(fj, w - 1)
    bi, bj = np.maximum(bi, 0), np.maximum(bj, 0)
    fwd = fin & (flag[fi, fj] != _INSIDE)
    bwd = bin_ & (flag[bi, bj] != _INSIDE)
    vf, vb, v0 = arr[:, fi, fj], arr[:, bi, bj], arr[:, qi, qj]
    return np.where(fwd & bwd, 0.5 * (vf - vb),
                    np.where(fwd, vf - v0, np.where(bwd, v0 - vb, 0.0)))


def _fill_pixel(out, flag, t, i, j, offs):
    h, w = flag.shape
    qi = i + offs[:, 0]
    qj = j + offs[:, 1]
    ok = (qi >= 0) & (qi < h) & (qj >= 0) & (qj < w)
    qi, qj = qi[ok], qj[ok]
    known = flag[qi, qj] != _INSIDE
    qi, qj = qi[known], qj[known]
    if qi.size == 0:
        return
    gti = _axis_gradient(t, flag, i, j, 0)
    gtj = _axis_gradient(t, flag, i, j, 1)
    ri, rj = i - qi, j - qj
    dist2 = (ri * ri + rj * rj).astype(np.float64)
    dist = np.sqrt(dist2)
    norm = math.hypot(gti, gtj)
    if norm > 0:
        direction = np.abs(ri * gti + rj * gtj) / (dist * norm)
    else:
        direction = np.ones_like(dist)
    direction = np.maximum(direction, 1e-6)
    level = 1.0 / (1.0 + np.abs(t[i, j] - t[qi, qj]))
    weight = direction * level / dist2

    vals = out[:, qi, qj]
    grads = _gradients_at(out, flag, qi, qj, 0) * ri + _gradients_at(out, flag, qi, qj, 1) * rj
    est = (weight * (vals + grads)).sum(axis=1) / weight.sum()
    out[:, i, j] = np.clip(est, vals.min(axis=1), vals.max(axis=1))


def _warp_matrix(params, centroid_yx):
    a_xy = params.matrix_xy()
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    a_yx = swap @ a_xy @ swap
    inv = np.linalg.inv(a_yx)
    c = np.asarray(centroid_yx, dtype=np.float64)
    t_yx = np.array([params.translation[1], params.translation[0]], dtype=np.float64)
    offset = c - inv @ (c + t_yx)
    return inv, offset


def warp_and_paste(image, mask, background, params, blur_sigma):
    """Warp the target about its centroid, blur it and composite it over ``background``.

    Image channels are resampled bilinearly, the mask with nearest neighbour so
    it stays binary.  Target pixels warped outside the frame are dropped.

    Returns
    -------
    image : ndarray
    mask : ndarray
        Binary float mask of the pasted target; may be empty.
    """
    img = _image_3d(image)
    bg = _image_3d(background)
    if bg.shape != img.shape:
        raise DimensionError(f"background {bg.shape} does not match image {img.shape}")
    m = _mask_2d(mask, img.shape[1:])
    if blur_sigma < 0:
        raise ValueError(f"blur_sigma must be non-negative, got {blur_sigma}")
    if not m.any():
        return bg.copy(), np.zeros(m.shape)
    centroid = np.array(np.nonzero(m), dtype=np.float64).mean(axis=1)
    mat, offset = _warp_matrix(params, centroid)
    identity = np.allclose(mat, np.eye(2)) and np.allclose(offset, 0.0)
    if identity:
        warped, wmask = img.copy(), m.copy()
    else:
        warped = np.stack([ndimage.affine_transform(ch, mat, offset, order=1, mode="nearest")
                           for ch in img])
        wmask = ndimage.affine_transform(m.astype(np.float64), mat, offset, order=0,
                                         mode="constant", cval=0.0) > 0.5
    if blur_sigma > 0:
        warped = ndimage.gaussian_filter(warped, sigma=(0, blur_sigma, blur_sigma))
    out = np.where(wmask[None], warped, bg)
    return out, wmask.astype(np.float64)


def generate_initial_set(image, mask, cfg=None, background=None):
    """Original pair followed by ``cfg.count - 1`` warped and blurred variants.

    Sample ``k`` draws its warp from a generator seeded with ``cfg.seed + k``,
    so the set is a pure function of its inputs.  Draws that push the target
    entirely out of frame are redrawn.
    """
    cfg = cfg or AugmentationConfig()
    img = _image_3d(image)
    m = _mask_2d(mask, img.shape[1:])
    if not m.any() or m.all():
        raise DegenerateMaskError("initial mask must contain both target and background")
    if background is None:
        background = inpaint_background(img, m, cfg.inpaint_radius)
    out = [(img.copy(), m.astype(np.float64))]
    for k in range(1, cfg.count):
        rng = np.random.default_rng(cfg.seed + k)
        for _ in range(10):
            params, sigma = cfg.draw(rng, m.shape)
            aug_img, aug_mask = warp_and_paste(img, m, background, params, sigma)
            if aug_mask.any():
                break
        else:
            aug_img, aug_mask = warp_and_paste(img, m, background, AffineParams(), sigma)
        out.append((aug_img, aug_mask))
    return out
