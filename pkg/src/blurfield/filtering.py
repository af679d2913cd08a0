"""Apply kernels to single-channel images.

All filters here are true convolutions: ``out(p) = sum_o k(o) I(p - o)``.
Every output value accumulates its taps in row-major kernel order, and
``workers > 1`` only splits output rows between threads, so serial and
parallel runs are bit-identical.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from enum import Enum

import numpy as np

from .covariance import CovMatrix, as_cov, cholesky_factor
from .errors import DomainError, ShapeError
from .kernel import KernelGrid, gaussian_kernel, separable_1d


class BoundaryMode(str, Enum):
    ZERO_PAD_SAME = "zero_pad_same"
    REFLECT_SAME = "reflect_same"
    VALID = "valid"

    @classmethod
    def parse(cls, mode) -> BoundaryMode:
        if isinstance(mode, BoundaryMode):
            return mode
        try:
            return cls(str(mode).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown boundary mode {mode!r}; expected one of {[m.value for m in cls]}"
            ) from None


def as_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeError(f"image must be a non-empty 2-D array, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise DomainError("image values must be finite")
    return img


def _coeffs(kernel) -> np.ndarray:
    if isinstance(kernel, KernelGrid):
        return kernel.coeffs
    c = np.asarray(kernel, dtype=np.float64)
    if c.ndim == 1:
        c = c[None, :]
    if c.ndim != 2 or c.shape[0] % 2 == 0 or c.shape[1] % 2 == 0:
        raise ShapeError(f"kernel must be 2-D with odd dimensions, got shape {c.shape}")
    return c


def _row_chunks(n, workers):
    workers = max(1, min(int(workers or 1), n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def map_rows(fn, n_rows, workers=None):
    """Evaluate ``fn(r0, r1)`` over row blocks and stack the results.

    Each block is computed by the same serial code, so splitting never changes
    any output value.
    """
    chunks = _row_chunks(n_rows, workers)
    if len(chunks) == 1:
        return fn(0, n_rows)
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda c: fn(*c), chunks))
    return np.concatenate(parts, axis=0)


def _pad(image, py, px, mode: BoundaryMode):
    if mode is BoundaryMode.VALID or (py == 0 and px == 0):
        return image
    if mode is BoundaryMode.ZERO_PAD_SAME:
        return np.pad(image, ((py, py), (px, px)))
    # half-sample symmetric: ... b a | a b c ... (matches reflect_index)
    return np.pad(image, ((py, py), (px, px)), mode="symmetric")


def _accumulate(padded, weights, ofs_y, ofs_x, out_shape, workers=None):
    """out[u, v] = sum_t weights[t] * padded[u + ofs_y[t], v + ofs_x[t]], in t order."""
    h, w = out_shape
    if h <= 0 or w <= 0:
        raise ShapeError(f"output would be empty, shape {out_shape}")

    def block(r0, r1):
        out = np.zeros((r1 - r0, w))
        for wt, oy, ox in zip(weights, ofs_y, ofs_x):
            if wt != 0.0:
                out += wt * padded[r0 + oy:r1 + oy, ox:ox + w]
        return out

    return map_rows(block, h, workers)


def _convolve(image, c, mode: BoundaryMode, rate=1, workers=None):
    ry, rx = c.shape[0] // 2, c.shape[1] // 2
    py, px = ry * rate, rx * rate
    if mode is BoundaryMode.VALID and (image.shape[0] <= 2 * py + 1 or image.shape[1] <= 2 * px + 1):
        raise ShapeError(
            f"valid mode needs an image larger than the {2 * py + 1}x{2 * px + 1} footprint, "
            f"got {image.shape}"
        )
    padded = _pad(image, py, px, mode)
    out_shape = (padded.shape[0] - 2 * py, padded.shape[1] - 2 * px)
    ii, jj = np.meshgrid(np.arange(c.shape[0]), np.arange(c.shape[1]), indexing="ij")
    # kernel index i sits at offset dy = i - ry and reads I(p - rate*dy)
    ofs_y = (2 * ry - ii.ravel()) * rate
    ofs_x = (2 * rx - jj.ravel()) * rate
    return _accumulate(padded, c.ravel(), ofs_y, ofs_x, out_shape, workers)


def conv2d(image, kernel, mode="zero_pad_same", workers=None) -> np.ndarray:
    """Convolve ``image`` with ``kernel``.

    Same modes keep the image shape; ``valid`` shrinks it by ``2 ry`` rows and
    ``2 rx`` columns and needs an image strictly larger than the kernel.
    """
    return _convolve(as_image(image), _coeffs(kernel), BoundaryMode.parse(mode), 1, workers)


def separable_conv(image, ky, kx, mode="zero_pad_same", workers=None) -> np.ndarray:
    """Column pass with ``ky`` then row pass with ``kx``."""
    mode = BoundaryMode.parse(mode)
    ky = np.asarray(ky, dtype=np.float64).reshape(-1, 1)
    kx = np.asarray(kx, dtype=np.float64).reshape(1, -1)
    img = as_image(image)
    if mode is BoundaryMode.VALID and (img.shape[0] <= ky.shape[0] or img.shape[1] <= kx.shape[1]):
        raise ShapeError(f"valid mode needs an image larger than the kernel, got {img.shape}")
    tmp = _convolve(img, _coeffs(ky), mode, 1, workers)
    return _convolve(tmp, _coeffs(kx), mode, 1, workers)


def gaussian_blur(image, cov, mode="zero_pad_same", workers=None) -> np.ndarray:
    """Blur by the sampled Gaussian of ``cov``; separable whenever ``sxy == 0``."""
    cov = as_cov(cov)
    if cov.sxy == 0.0:
        ky, kx = separable_1d(cov)
        return separable_conv(image, ky, kx, mode, workers)
    return conv2d(image, gaussian_kernel(cov), mode, workers)


def compose_and_filter(image, cov, f, mode="zero_pad_same", workers=None) -> np.ndarray:
    """Blur by the Gaussian of ``cov`` and then filter by ``f``."""
    blurred = conv2d(image, gaussian_kernel(cov), mode, workers)
    return conv2d(blurred, f, mode, workers)


def dilated_conv(image, f, rate: int, mode="zero_pad_same", workers=None) -> np.ndarray:
    rate = _check_rate(rate)
    return _convolve(as_image(image), _coeffs(f), BoundaryMode.parse(mode), rate, workers)


def blurred_dilated_conv(image, f, rate: int, blur_coef: float = 0.5,
                         mode="zero_pad_same", workers=None) -> np.ndarray:
    """Spherical blur with ``sigma = blur_coef * rate``, then dilated filtering."""
    rate = _check_rate(rate)
    if not blur_coef > 0.0:
        raise DomainError(f"blur_coef must be positive, got {blur_coef}")
    sigma = blur_coef * rate
    blurred = conv2d(image, gaussian_kernel(CovMatrix.spherical(sigma * sigma)), mode, workers)
    return dilated_conv(blurred, f, rate, mode, workers)


def _check_rate(rate):
    if int(rate) != rate or rate < 1:
        raise DomainError(f"dilation rate must be an integer >= 1, got {rate}")
    return int(rate)


# -- bilinear sampling -------------------------------------------------------


def reflect_index(i, n):
    """Half-sample symmetric index folding, matching ``np.pad(mode="symmetric")``."""
    m = np.mod(i, 2 * n)
    return np.where(m >= n, 2 * n - 1 - m, m)


def bilinear_gather(image, ys, xs, with_grad=False, boundary="zero"):
    """Bilinear samples of ``image`` at arrays of coordinates ``(ys, xs)``.

    ``boundary="zero"`` reads pixels outside the image as 0; ``"reflect"``
    folds each corner index back into the image by half-sample symmetry.
    With ``with_grad`` the partial derivatives with respect to ``ys`` and
    ``xs`` are returned too (right-continuous at cell boundaries).
    """
    h, w = image.shape
    ys = np.asarray(ys, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    if np.isnan(ys).any() or np.isnan(xs).any():
        raise DomainError("sample coordinates must not be NaN")
    y0f = np.floor(ys)
    x0f = np.floor(xs)
    wy = ys - y0f
    wx = xs - x0f
    if boundary == "reflect":
        y0f, x0f = np.mod(y0f, 2 * h), np.mod(x0f, 2 * w)
        y0, x0 = y0f.astype(np.intp), x0f.astype(np.intp)
        ry = (reflect_index(y0, h), reflect_index(y0 + 1, h))
        rx = (reflect_index(x0, w), reflect_index(x0 + 1, w))

        def px(a, b):
            return image[ry[a], rx[b]]
    elif boundary == "zero":
        # coordinates far outside still read 0 after clipping
        y0 = np.clip(y0f, -2, h).astype(np.intp)
        x0 = np.clip(x0f, -2, w).astype(np.intp)
        padded = np.pad(image, 2)

        def px(a, b):
            return padded[y0 + a + 2, x0 + b + 2]
    else:
        raise ValueError(f"unknown sampling boundary {boundary!r}")

    v00, v01, v10, v11 = px(0, 0), px(0, 1), px(1, 0), px(1, 1)
    val = ((1.0 - wy) * (1.0 - wx) * v00 + (1.0 - wy) * wx * v01
           + wy * (1.0 - wx) * v10 + wy * wx * v11)
    if not with_grad:
        return val
    gy = (1.0 - wx) * (v10 - v00) + wx * (v11 - v01)
    gx = (1.0 - wy) * (v01 - v00) + wy * (v11 - v10)
    return val, gy, gx


def blur_resample_conv(image, cov, f, mode="zero_pad_same", workers=None) -> np.ndarray:
    """Blur by the Gaussian of ``cov``, then filter with taps warped by its Cholesky factor.

    The coefficient of ``f`` at offset ``o`` reads the blurred image at
    ``p - A o`` with ``A A^T = Sigma``, so an identity covariance reproduces
    :func:`compose_and_filter`. In ``valid`` mode the result is cropped to the
    pixels whose warped taps all stay inside the blurred image.
    """
    mode = BoundaryMode.parse(mode)
    c = _coeffs(f)
    if c.shape[0] != c.shape[1]:
        raise ShapeError(f"blur-resample filter must be square, got {c.shape}")
    cov = as_cov(cov)
    a = cholesky_factor(cov)
    blurred = conv2d(image, gaussian_kernel(cov), mode, workers)
    r = c.shape[0] // 2
    dy, dx = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    tap_y = -(a[0, 0] * dy).ravel()
    tap_x = -(a[1, 0] * dy + a[1, 1] * dx).ravel()
    weights = c.ravel()
    h, w = blurred.shape
    my = mx = 0
    if mode is BoundaryMode.VALID:
        my = int(math.ceil(np.abs(tap_y).max()))
        mx = int(math.ceil(np.abs(tap_x).max()))
        if h <= 2 * my or w <= 2 * mx:
            raise ShapeError("image too small for the warped filter footprint in valid mode")
    boundary = "reflect" if mode is BoundaryMode.REFLECT_SAME else "zero"
    xs = np.arange(mx, w - mx, dtype=np.float64)

    def block(r0, r1):
        ys = np.arange(my + r0, my + r1, dtype=np.float64)
        gy, gx = np.meshgrid(ys, xs, indexing="ij")
        out = np.zeros(gy.shape)
        for wt, ty, tx in zip(weights, tap_y, tap_x):
            if wt != 0.0:
                out += wt * bilinear_gather(blurred, gy + ty, gx + tx, boundary=boundary)
        return out

    return map_rows(block, h - 2 * my, workers)
