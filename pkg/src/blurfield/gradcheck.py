"""Central-difference checks of the analytic gradients.

Both checks compare against finite differences of forward evaluations only,
so they stay independent of the backward code they audit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import CovParams, Family, params_to_matrix
from .dynamic import CovField, _RING, dynamic_gauss_conv, dynamic_gauss_conv_backward
from .kernel import support_radius
from .optimize import blur_forward, loss_and_grad, mse_loss
from .synth import smooth_texture

TOLERANCE = 1e-4
# relative error denominators never drop below this, so a gradient entry that
# is zero up to roundoff is judged by its absolute error
REL_FLOOR = 1e-6


def relative_error(analytic, numeric, floor=REL_FLOOR) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def central_difference(fn, x, step):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        out[i] = (fn(xp) - fn(xm)) / (2.0 * step)
    return out


def random_params(family, rng) -> CovParams:
    """Covariance parameters with support radius at most 3."""
    family = Family.parse(family)
    if family is Family.SPHERICAL:
        p = rng.uniform(np.log(0.6), np.log(1.4), size=1)
    elif family is Family.DIAGONAL:
        p = rng.uniform(np.log(0.6), np.log(1.4), size=2)
    else:
        p = np.array([rng.uniform(-0.5, 0.3), rng.uniform(-0.6, 0.6), rng.uniform(-0.5, 0.2)])
    return CovParams(family, tuple(p))


@dataclass
class GradReport:
    path: str
    family: Family
    max_rel_error: np.ndarray  # one entry per parameter

    @property
    def passed(self) -> bool:
        return bool(np.all(self.max_rel_error <= TOLERANCE))

    def lines(self):
        for i, e in enumerate(self.max_rel_error):
            status = "ok" if e <= TOLERANCE else "FAIL"
            yield (f"path={self.path} family={self.family.tag} param=p{i + 1} "
                   f"max_rel_err={e:.3e} {status}")


def check_kernel_path(family, seed: int, size: int = 16, step: float = 1e-5,
                      corrupt: float = 0.0) -> GradReport:
    """Analytic loss gradient vs central differences, support radius pinned."""
    family = Family.parse(family)
    rng = np.random.default_rng(seed)
    ref = smooth_texture(size, seed)
    truth = random_params(family, rng)
    params = random_params(family, rng)
    target = blur_forward(ref, truth)
    radius = support_radius(params_to_matrix(params))
    margin = 3
    _, grad = loss_and_grad(ref, target, params, margin, radius=radius)
    grad = grad * (1.0 + corrupt)

    def loss(p):
        return mse_loss(blur_forward(ref, params.with_array(p), radius), target, margin)

    numeric = central_difference(loss, params.array, step)
    return GradReport("kernel", family, relative_error(grad, numeric))


def tap_gap(field: CovField) -> np.ndarray:
    """Per-pixel distance of the moving tap coordinates to the nearest cell edge.

    Coordinates that cannot move with the field (the center tap, and e.g. the
    y coordinate of taps on the x axis) are skipped: their cell is fixed.
    """
    l11, l21, l22 = field.factors()
    coupled = field.family is Family.FULL
    gap = np.full(l11.shape, np.inf)
    for oy, ox in _RING[1:]:
        moving = []
        if oy != 0.0:
            moving.append(l11 * oy)
        if ox != 0.0 or (oy != 0.0 and coupled):
            moving.append(l21 * oy + l22 * ox)
        for t in moving:
            frac = t - np.floor(t)
            gap = np.minimum(gap, np.minimum(frac, 1.0 - frac))
    return gap


def off_boundary_field(family, shape, rng, min_gap: float = 1e-3, tries: int = 1000) -> CovField:
    """Random field whose ring taps all sit at least ``min_gap`` from bilinear cell edges."""
    family = Family.parse(family)
    p = np.stack([random_params(family, rng).array for _ in range(shape[0] * shape[1])])
    p = p.reshape(shape + (family.size,))
    for _ in range(tries):
        bad = tap_gap(CovField(family, p)) < min_gap
        if not bad.any():
            return CovField(family, p)
        for y, x in zip(*np.nonzero(bad)):
            p[y, x] = random_params(family, rng).array
    raise RuntimeError("could not place taps away from cell boundaries")


def check_dynamic_path(family, seed: int, size: int = 12, step: float = 1e-5,
                       corrupt: float = 0.0) -> GradReport:
    """Per-pixel covariance-field gradients vs central differences."""
    family = Family.parse(family)
    rng = np.random.default_rng(seed)
    image = rng.uniform(-1.0, 1.0, size=(size, size))
    weights = rng.uniform(-1.0, 1.0, size=9)
    upstream = rng.uniform(-1.0, 1.0, size=(size, size))
    field = off_boundary_field(family, (size, size), rng)
    grad_field, _ = dynamic_gauss_conv_backward(image, field, weights, upstream)
    grad_field = grad_field * (1.0 + corrupt)

    worst = np.zeros(family.size)
    for y in range(size):
        for x in range(size):
            def loss(p, y=y, x=x):
                q = field.params.copy()
                q[y, x] = p
                return float(np.sum(upstream * dynamic_gauss_conv(image, CovField(family, q), weights)))

            numeric = central_difference(loss, field.params[y, x], step)
            worst = np.maximum(worst, relative_error(grad_field[y, x], numeric))
    return GradReport("dynamic", family, worst)
