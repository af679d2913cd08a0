"""Center-anchored filter grids: sampled Gaussians, free-form, DoG, composed.

Gaussian coefficients are ``exp(-x^T Sigma^-1 x / 2)`` evaluated at integer
offsets and renormalized by their sum. The continuous density's
``1 / (2 pi sqrt(det Sigma))`` prefactor cancels under renormalization and is
never computed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovMatrix, CovParams, as_cov, matrix_partials, params_to_matrix
from .errors import DomainError, NotSeparableError, ShapeError

KINDS = ("gaussian", "freeform", "dog", "composed")


@dataclass(frozen=True)
class KernelGrid:
    """Odd-sized grid of coefficients anchored at the center tap.

    ``coeffs[ry + dy, rx + dx]`` holds the coefficient for offset ``(dy, dx)``.
    """

    coeffs: np.ndarray
    kind: str = "freeform"
    ry: int = field(init=False)
    rx: int = field(init=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64)
        if c.ndim != 2:
            raise ShapeError(f"kernel must be 2-D, got {c.ndim}-D")
        if c.shape[0] % 2 == 0 or c.shape[1] % 2 == 0:
            raise ShapeError(f"kernel dimensions must be odd, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise DomainError("kernel coefficients must be finite")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "ry", c.shape[0] // 2)
        object.__setattr__(self, "rx", c.shape[1] // 2)

    @property
    def shape(self):
        return self.coeffs.shape

    def __eq__(self, other):
        if not isinstance(other, KernelGrid):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None


@dataclass(frozen=True)
class KernelWithGrads:
    kernel: KernelGrid
    grads: list


def delta() -> KernelGrid:
    """The 1x1 identity filter."""
    return KernelGrid(np.ones((1, 1)), "freeform")


def freeform(coeffs) -> KernelGrid:
    return KernelGrid(coeffs, "freeform")


def support_radius(cov) -> tuple:
    """Half sizes ``(ceil(2 sigma_y), ceil(2 sigma_x))``, each at least 1."""
    cov = as_cov(cov)
    ry = max(1, math.ceil(2.0 * math.sqrt(cov.syy)))
    rx = max(1, math.ceil(2.0 * math.sqrt(cov.sxx)))
    return ry, rx


def _check_radius(radius):
    ry, rx = (radius, radius) if np.isscalar(radius) else radius
    ry, rx = int(ry), int(rx)
    if ry < 1 or rx < 1:
        raise DomainError(f"kernel radius must be >= 1 per axis, got {(ry, rx)}")
    return ry, rx


def _offsets(ry, rx):
    dy = np.arange(-ry, ry + 1, dtype=np.float64)[:, None]
    dx = np.arange(-rx, rx + 1, dtype=np.float64)[None, :]
    return dy, dx


def _whitened(cov: CovMatrix, ry, rx):
    """Offsets mapped through Sigma^-1, plus the quadratic form x^T Sigma^-1 x."""
    dy, dx = _offsets(ry, rx)
    det = cov.det
    zy = (cov.sxx * dy - cov.sxy * dx) / det
    zx = (cov.syy * dx - cov.sxy * dy) / det
    return zy, zx, dy * zy + dx * zx


def gaussian_kernel(cov, radius_override=None) -> KernelGrid:
    cov = as_cov(cov)
    ry, rx = support_radius(cov) if radius_override is None else _check_radius(radius_override)
    _, _, q = _whitened(cov, ry, rx)
    h = np.exp(-0.5 * q)
    return KernelGrid(h / h.sum(), "gaussian")


def gaussian_kernel_with_grads(params: CovParams, radius_override=None) -> KernelWithGrads:
    """Normalized Gaussian grid and its partials with respect to ``params``.

    The support radius is computed from Sigma (or taken from
    ``radius_override``) and held fixed; gradients do not flow through the
    ``ceil(2 sigma)`` rule.
    """
    cov = params_to_matrix(params)
    ry, rx = support_radius(cov) if radius_override is None else _check_radius(radius_override)
    zy, zx, q = _whitened(cov, ry, rx)
    h = np.exp(-0.5 * q)
    total = h.sum()
    k = h / total
    grads = []
    for d in matrix_partials(params):
        # d/dp exp(-q/2) = h * z^T (dSigma) z / 2 with z = Sigma^-1 x
        dh = 0.5 * h * (d[0, 0] * zy * zy + 2.0 * d[0, 1] * zy * zx + d[1, 1] * zx * zx)
        grads.append((dh - k * dh.sum()) / total)
    return KernelWithGrads(KernelGrid(k, "gaussian"), grads)


def separable_1d(cov, radius_override=None):
    """1-D factors ``(ky, kx)`` whose outer product is :func:`gaussian_kernel`."""
    cov = as_cov(cov)
    if cov.sxy != 0.0:
        raise NotSeparableError(f"covariance with sxy={cov.sxy} does not separate")
    ry, rx = support_radius(cov) if radius_override is None else _check_radius(radius_override)
    dy, dx = _offsets(ry, rx)
    ky = np.exp(-0.5 * dy[:, 0] ** 2 / cov.syy)
    kx = np.exp(-0.5 * dx[0, :] ** 2 / cov.sxx)
    return ky / ky.sum(), kx / kx.sum()


def dog_kernel(center, surround) -> KernelGrid:
    """Center minus surround, both rendered on the surround's support."""
    center, surround = as_cov(center), as_cov(surround)
    if surround.syy < center.syy or surround.sxx < center.sxx:
        raise DomainError("DoG surround must be at least as wide as the center on each axis")
    radius = support_radius(surround)
    c = gaussian_kernel(center, radius).coeffs
    s = gaussian_kernel(surround, radius).coeffs
    return KernelGrid(c - s, "dog")


def compose_kernels(g, f) -> KernelGrid:
    """Full 2-D convolution ``g * f``; half sizes add. Plain arrays count as free-form grids."""
    a, b = (k.coeffs if isinstance(k, KernelGrid) else freeform(k).coeffs for k in (g, f))
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for i in range(b.shape[0]):
        for j in range(b.shape[1]):
            out[i:i + a.shape[0], j:j + a.shape[1]] += b[i, j] * a
    return KernelGrid(out, "composed")
