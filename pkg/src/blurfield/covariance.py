"""Spatial covariance in matrix and log-Cholesky coordinates.

Index order is (y, x) throughout: row/column 0 of every 2x2 matrix is y.

The full family stores ``(a, b, c) = (log u11, u12, log u22)`` for the upper
triangular factor ``U`` with ``Sigma = U^T U``. Spherical and diagonal families
drop the off-diagonal term and tie or untie the two log scales.

The scalar functions here are thin wrappers over array kernels (``_forward``,
``_partials``, ``_cholesky``, ``_cholesky_partials``) that broadcast over
leading axes, so per-pixel covariance fields share the same formulas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, FamilyError


class Family(str, Enum):
    SPHERICAL = "spherical"
    DIAGONAL = "diagonal"
    FULL = "full"

    @property
    def size(self) -> int:
        return _FAMILY_SIZE[self]

    @property
    def tag(self) -> str:
        return _FAMILY_TAG[self]

    @classmethod
    def parse(cls, name) -> Family:
        if isinstance(name, Family):
            return name
        key = str(name).strip().lower()
        try:
            return _FAMILY_ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown covariance family {name!r}") from None


_FAMILY_SIZE = {Family.SPHERICAL: 1, Family.DIAGONAL: 2, Family.FULL: 3}
_FAMILY_TAG = {Family.SPHERICAL: "sph", Family.DIAGONAL: "diag", Family.FULL: "full"}
_FAMILY_ALIASES = {
    "sph": Family.SPHERICAL,
    "spherical": Family.SPHERICAL,
    "diag": Family.DIAGONAL,
    "diagonal": Family.DIAGONAL,
    "full": Family.FULL,
}


@dataclass(frozen=True)
class CovParams:
    """Unconstrained log-Cholesky coordinates of a 2x2 covariance."""

    family: Family
    p: tuple

    def __post_init__(self):
        family = Family.parse(self.family)
        p = tuple(float(v) for v in np.ravel(self.p))
        if len(p) != family.size:
            raise FamilyError(
                f"{family.value} covariance takes {family.size} parameter(s), got {len(p)}"
            )
        if not all(math.isfinite(v) for v in p):
            raise DomainError(f"covariance parameters must be finite, got {p}")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "p", p)

    @classmethod
    def spherical(cls, sigma: float) -> CovParams:
        """Spherical covariance with standard deviation ``sigma``."""
        return cls(Family.SPHERICAL, (math.log(sigma),))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.p, dtype=np.float64)

    def with_array(self, values) -> CovParams:
        return CovParams(self.family, tuple(np.asarray(values, dtype=np.float64)))

    def __len__(self):
        return len(self.p)


@dataclass(frozen=True)
class CovMatrix:
    """Symmetric positive-definite ``[[syy, sxy], [sxy, sxx]]``."""

    syy: float
    sxx: float
    sxy: float = 0.0

    def __post_init__(self):
        syy, sxx, sxy = float(self.syy), float(self.sxx), float(self.sxy)
        if not (math.isfinite(syy) and math.isfinite(sxx) and math.isfinite(sxy)):
            raise DomainError(f"covariance entries must be finite, got {(syy, sxx, sxy)}")
        if syy <= 0.0 or sxx <= 0.0 or syy * sxx - sxy * sxy <= 0.0:
            raise DomainError(
                f"covariance is not positive definite: syy={syy}, sxx={sxx}, sxy={sxy}"
            )
        object.__setattr__(self, "syy", syy)
        object.__setattr__(self, "sxx", sxx)
        object.__setattr__(self, "sxy", sxy)

    @classmethod
    def from_array(cls, m) -> CovMatrix:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (2, 2):
            raise DomainError(f"covariance must be 2x2, got shape {m.shape}")
        if m[0, 1] != m[1, 0]:
            raise DomainError("covariance must be symmetric")
        return cls(m[0, 0], m[1, 1], m[0, 1])

    @classmethod
    def spherical(cls, variance: float) -> CovMatrix:
        return cls(variance, variance, 0.0)

    @property
    def det(self) -> float:
        return self.syy * self.sxx - self.sxy * self.sxy

    def as_array(self) -> np.ndarray:
        return np.array([[self.syy, self.sxy], [self.sxy, self.sxx]])


def as_cov(cov) -> CovMatrix:
    """Coerce a CovMatrix, CovParams or 2x2 array-like to CovMatrix."""
    if isinstance(cov, CovMatrix):
        return cov
    if isinstance(cov, CovParams):
        return params_to_matrix(cov)
    return CovMatrix.from_array(cov)


# -- array kernels ---------------------------------------------------------


def _forward(family: Family, p: np.ndarray):
    """Map parameters of shape (..., d) to (syy, sxx, sxy) arrays of shape (...)."""
    p = np.asarray(p, dtype=np.float64)
    if family is Family.SPHERICAL:
        v = np.exp(2.0 * p[..., 0])
        return v, v.copy(), np.zeros_like(v)
    if family is Family.DIAGONAL:
        return np.exp(2.0 * p[..., 0]), np.exp(2.0 * p[..., 1]), np.zeros(p.shape[:-1])
    a, b, c = p[..., 0], p[..., 1], p[..., 2]
    ea = np.exp(a)
    return ea * ea, b * b + np.exp(2.0 * c), b * ea


def _partials(family: Family, p: np.ndarray) -> np.ndarray:
    """Partials of (syy, sxx, sxy) with respect to each parameter: shape (..., d, 3)."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros(p.shape + (3,))
    if family is Family.SPHERICAL:
        v = 2.0 * np.exp(2.0 * p[..., 0])
        out[..., 0, 0] = v
        out[..., 0, 1] = v
    elif family is Family.DIAGONAL:
        out[..., 0, 0] = 2.0 * np.exp(2.0 * p[..., 0])
        out[..., 1, 1] = 2.0 * np.exp(2.0 * p[..., 1])
    else:
        a, b, c = p[..., 0], p[..., 1], p[..., 2]
        ea = np.exp(a)
        out[..., 0, 0] = 2.0 * ea * ea
        out[..., 0, 2] = b * ea
        out[..., 1, 1] = 2.0 * b
        out[..., 1, 2] = ea
        out[..., 2, 1] = 2.0 * np.exp(2.0 * c)
    return out


def _cholesky(syy, sxx, sxy):
    """Lower factor entries (l11, l21, l22) with L L^T = Sigma."""
    l11 = np.sqrt(syy)
    l21 = sxy / l11
    l22 = np.sqrt(sxx - l21 * l21)
    return l11, l21, l22


def _cholesky_partials(l11, l21, l22, dsyy, dsxx, dsxy):
    """Differential of the Cholesky factor, dL = L Phi(L^-1 dSigma L^-T).

    ``Phi`` keeps the strict lower triangle and halves the diagonal.
    """
    i11 = 1.0 / l11
    i22 = 1.0 / l22
    i21 = -l21 * i11 * i22
    m11 = i11 * i11 * dsyy
    m21 = (i21 * dsyy + i22 * dsxy) * i11
    m22 = i21 * i21 * dsyy + 2.0 * i21 * i22 * dsxy + i22 * i22 * dsxx
    return 0.5 * l11 * m11, 0.5 * l21 * m11 + l22 * m21, 0.5 * l22 * m22


# -- public operations -----------------------------------------------------


def params_to_matrix(params: CovParams) -> CovMatrix:
    with np.errstate(over="ignore"):
        syy, sxx, sxy = _forward(params.family, params.array)
    return CovMatrix(float(syy), float(sxx), float(sxy))


def matrix_to_params(cov, family) -> CovParams:
    """Invert :func:`params_to_matrix` for the requested family.

    Raises
    ------
    DomainError
        If ``cov`` is not symmetric positive definite.
    FamilyError
        If ``cov`` has structure the family cannot express: a non-zero ``sxy``
        for diagonal/spherical, or unequal variances for spherical. No
        projection onto the family is attempted.
    """
    cov = as_cov(cov)
    family = Family.parse(family)
    if family is Family.FULL:
        l11, l21, l22 = _cholesky(cov.syy, cov.sxx, cov.sxy)
        return CovParams(family, (math.log(l11), l21, math.log(l22)))
    if cov.sxy != 0.0:
        raise FamilyError(f"{family.value} covariance requires sxy == 0, got {cov.sxy}")
    if family is Family.DIAGONAL:
        return CovParams(family, (0.5 * math.log(cov.syy), 0.5 * math.log(cov.sxx)))
    if cov.syy != cov.sxx:
        raise FamilyError(
            f"spherical covariance requires syy == sxx, got {cov.syy} and {cov.sxx}"
        )
    return CovParams(family, (0.5 * math.log(cov.syy),))


def matrix_partials(params: CovParams) -> list:
    """Symmetric 2x2 partials of Sigma, one per parameter."""
    d = _partials(params.family, params.array)
    return [np.array([[row[0], row[2]], [row[2], row[1]]]) for row in d]


def cholesky_factor(cov) -> np.ndarray:
    """Lower-triangular ``A`` with positive diagonal and ``A @ A.T == cov``."""
    cov = as_cov(cov)
    l11, l21, l22 = _cholesky(cov.syy, cov.sxx, cov.sxy)
    return np.array([[l11, 0.0], [l21, l22]])


def cholesky_partials(params: CovParams) -> list:
    """Partials of the lower Cholesky factor of Sigma(params), one per parameter.

    Chained from :func:`matrix_partials` through the Cholesky differential.
    """
    syy, sxx, sxy = _forward(params.family, params.array)
    l11, l21, l22 = _cholesky(syy, sxx, sxy)
    out = []
    for row in _partials(params.family, params.array):
        d11, d21, d22 = _cholesky_partials(l11, l21, l22, row[0], row[1], row[2])
        out.append(np.array([[d11, 0.0], [d21, d22]]))
    return out


def cascade_add(a, b) -> CovMatrix:
    """Covariance of a Gaussian convolved with a Gaussian."""
    a, b = as_cov(a), as_cov(b)
    return CovMatrix(a.syy + b.syy, a.sxx + b.sxx, a.sxy + b.sxy)


# -- text form -------------------------------------------------------------


def parse_cov_spec(text: str) -> CovParams:
    """Parse ``full:a,b,c``, ``diag:py,px`` or ``sph:p``.

    Malformed text raises ``ValueError``; finite-but-overflowing coordinates
    surface later as :class:`DomainError` from :func:`params_to_matrix`.
    """
    tag, sep, body = str(text).partition(":")
    if not sep:
        raise ValueError(f"covariance spec {text!r} must look like 'sph:p', 'diag:py,px' or 'full:a,b,c'")
    if tag.strip().lower() not in _FAMILY_TAG.values():
        raise ValueError(f"unknown covariance tag {tag!r} in {text!r}")
    family = Family.parse(tag)
    try:
        values = tuple(float(v) for v in body.split(","))
    except ValueError:
        raise ValueError(f"non-numeric covariance coordinate in {text!r}") from None
    if len(values) != family.size:
        raise ValueError(f"{tag} takes {family.size} coordinate(s), got {len(values)} in {text!r}")
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"covariance coordinates must be finite in {text!r}")
    return CovParams(family, values)


def format_cov_spec(params: CovParams) -> str:
    return params.family.tag + ":" + ",".join(f"{v:.17g}" for v in params.p)
