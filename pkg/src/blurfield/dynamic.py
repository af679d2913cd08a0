"""Dynamic Gaussian structure: per-pixel covariance warps a 9-point sampling ring.

Tap 0 is the center; taps 1..8 sit on the unit circle at angle
``2 pi (i - 1) / 8`` measured from the +x axis, counter-clockwise in image
coordinates with y pointing down, at offset ``(dy, dx) = (sin, cos)``. Each
pixel's covariance maps offset ``o`` to ``A o`` with ``A`` the lower Cholesky
factor, and the output is the weighted sum of bilinear samples at ``p + A o``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .covariance import (
    CovParams,
    Family,
    _cholesky,
    _cholesky_partials,
    _forward,
    _partials,
    as_cov,
    cholesky_factor,
)
from .errors import DomainError, ShapeError
from .filtering import as_image, bilinear_gather, map_rows
from .kernel import KernelGrid

N_TAPS = 9

_S = math.sqrt(2.0) / 2.0
_RING = np.array([
    (0.0, 0.0),
    (0.0, 1.0),
    (_S, _S),
    (1.0, 0.0),
    (_S, -_S),
    (0.0, -1.0),
    (-_S, -_S),
    (-1.0, 0.0),
    (-_S, _S),
])
_RING.setflags(write=False)


def base_ring() -> np.ndarray:
    """The nine (dy, dx) offsets of the standard sampling pattern."""
    return _RING.copy()


@dataclass(frozen=True)
class CovField:
    """Per-pixel log-Cholesky parameters, ``params.shape == (H, W, d)``."""

    family: Family
    params: np.ndarray

    def __post_init__(self):
        family = Family.parse(self.family)
        p = np.array(self.params, dtype=np.float64)
        if p.ndim != 3 or p.shape[2] != family.size:
            raise ShapeError(
                f"{family.value} field needs shape (H, W, {family.size}), got {p.shape}"
            )
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ShapeError("covariance field must be non-empty")
        if not np.all(np.isfinite(p)):
            raise DomainError("covariance field parameters must be finite")
        with np.errstate(over="ignore", invalid="ignore"):
            syy, sxx, sxy = _forward(family, p)
            ok = np.isfinite(syy) & np.isfinite(sxx) & np.isfinite(sxy) & (syy * sxx - sxy * sxy > 0)
        if not ok.all():
            raise DomainError("covariance field has entries that are not positive definite")
        p.setflags(write=False)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", p)

    @classmethod
    def constant(cls, params: CovParams, height: int, width: int) -> CovField:
        p = np.broadcast_to(params.array, (height, width, params.family.size))
        return cls(params.family, p)

    @classmethod
    def from_tensor(cls, tensor) -> CovField:
        """Build from an (H, W, d) array; the family follows from ``d``."""
        t = np.asarray(tensor, dtype=np.float64)
        if t.ndim != 3 or t.shape[2] not in (1, 2, 3):
            raise ShapeError(f"covariance field tensor must be (H, W, d) with d in 1..3, got {t.shape}")
        family = {1: Family.SPHERICAL, 2: Family.DIAGONAL, 3: Family.FULL}[t.shape[2]]
        return cls(family, t)

    @property
    def height(self) -> int:
        return self.params.shape[0]

    @property
    def width(self) -> int:
        return self.params.shape[1]

    def at(self, y: int, x: int) -> CovParams:
        return CovParams(self.family, tuple(self.params[y, x]))

    def factors(self):
        """Lower Cholesky entries (l11, l21, l22), each of shape (H, W)."""
        return _cholesky(*_forward(self.family, self.params))

    def factor_partials(self):
        """Partials of (l11, l21, l22), each of shape (H, W, d)."""
        l11, l21, l22 = self.factors()
        d = _partials(self.family, self.params)
        return _cholesky_partials(
            l11[..., None], l21[..., None], l22[..., None], d[..., 0], d[..., 1], d[..., 2]
        )


def as_tap_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape != (N_TAPS,):
        raise ShapeError(f"tap weights must hold {N_TAPS} values, got {w.size}")
    if not np.all(np.isfinite(w)):
        raise DomainError("tap weights must be finite")
    return w


def warp_offsets(cov) -> np.ndarray:
    """Ring offsets mapped through the lower Cholesky factor of ``cov``."""
    a = cholesky_factor(as_cov(cov))
    return _RING @ a.T


def bilinear_sample(image, y: float, x: float) -> float:
    """Bilinear interpolation with zero-valued pixels outside the image."""
    if math.isnan(y) or math.isnan(x):
        raise DomainError("sample coordinates must not be NaN")
    return float(bilinear_gather(as_image(image), np.array(y), np.array(x)))


def _check(image, field: CovField):
    img = as_image(image)
    if (field.height, field.width) != img.shape:
        raise ShapeError(
            f"field is {field.height}x{field.width} but image is {img.shape[0]}x{img.shape[1]}"
        )
    return img


def dynamic_gauss_conv(image, field: CovField, weights, workers=None) -> np.ndarray:
    img = _check(image, field)
    w = as_tap_weights(weights)
    l11, l21, l22 = field.factors()
    h, wd = img.shape
    xs = np.arange(wd, dtype=np.float64)

    def block(r0, r1):
        gy, gx = np.meshgrid(np.arange(r0, r1, dtype=np.float64), xs, indexing="ij")
        a11, a21, a22 = l11[r0:r1], l21[r0:r1], l22[r0:r1]
        out = np.zeros(gy.shape)
        for wt, (oy, ox) in zip(w, _RING):
            out += wt * bilinear_gather(img, gy + a11 * oy, gx + (a21 * oy + a22 * ox))
        return out

    return map_rows(block, h, workers)


def dynamic_gauss_conv_backward(image, field: CovField, weights, upstream_grad):
    """Gradients of ``sum(upstream_grad * dynamic_gauss_conv(...))``.

    Returns ``(grad_field, grad_weights)`` with shapes ``(H, W, d)`` and ``(9,)``.
    The chain runs through the bilinear coordinate derivative, the linear
    warp, the Cholesky differential and the covariance partials. Bilinear
    sampling is not differentiable on cell boundaries; there the derivative
    of the cell to the lower right is used.
    """
    img = _check(image, field)
    w = as_tap_weights(weights)
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != img.shape:
        raise ShapeError(f"upstream gradient shape {g.shape} does not match image {img.shape}")
    l11, l21, l22 = field.factors()
    d11, d21, d22 = field.factor_partials()
    gy, gx = np.meshgrid(np.arange(img.shape[0], dtype=np.float64),
                         np.arange(img.shape[1], dtype=np.float64), indexing="ij")
    grad_w = np.zeros(N_TAPS)
    grad_field = np.zeros(field.params.shape)
    for i, (wt, (oy, ox)) in enumerate(zip(w, _RING)):
        val, dvy, dvx = bilinear_gather(
            img, gy + l11 * oy, gx + (l21 * oy + l22 * ox), with_grad=True
        )
        grad_w[i] = np.sum(g * val)
        if i == 0:
            continue
        coef_y = (g * wt * dvy)[..., None]
        coef_x = (g * wt * dvx)[..., None]
        grad_field += coef_y * (d11 * oy) + coef_x * (d21 * oy + d22 * ox)
    return grad_field, grad_w


def sparse_tap_kernel(cov, weights) -> KernelGrid:
    """Static kernel equivalent to a spatially constant field of ``cov``.

    Each warped tap is splatted onto its four neighbouring integer offsets
    with bilinear weights, and the grid is laid out for :func:`conv2d`'s
    true-convolution convention, so that away from the border
    ``conv2d(image, sparse_tap_kernel(cov, w))`` equals the dynamic filter
    with that constant field.
    """
    w = as_tap_weights(weights)
    taps = warp_offsets(cov)
    base = np.floor(taps).astype(int)
    r = int(np.ceil(np.abs(taps)).max())
    grid = np.zeros((2 * r + 1, 2 * r + 1))
    for wt, (ty, tx), (by, bx) in zip(w, taps, base):
        fy, fx = ty - by, tx - bx
        for cy, cwy in ((by, 1.0 - fy), (by + 1, fy)):
            for cx, cwx in ((bx, 1.0 - fx), (bx + 1, fx)):
                if cwy * cwx == 0.0:
                    continue
                # reading I(p + c) is the convolution tap at offset -c
                grid[r - cy, r - cx] += wt * cwy * cwx
    return KernelGrid(grid, "freeform")
