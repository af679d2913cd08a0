"""Recover an unknown Gaussian blur by gradient descent on its covariance."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .covariance import CovParams, Family, params_to_matrix
from .errors import DivergenceError, DomainError, ShapeError
from .filtering import BoundaryMode, _convolve, as_image
from .kernel import gaussian_kernel, gaussian_kernel_with_grads, support_radius

log = logging.getLogger(__name__)

DEFAULT_MARGIN = 8


@dataclass(frozen=True)
class RecoveryConfig:
    init: CovParams
    learning_rate: float = 0.01
    momentum: float = 0.9
    steps: int = 300
    margin: int = DEFAULT_MARGIN
    family: Family = None

    def __post_init__(self):
        family = self.init.family if self.family is None else Family.parse(self.family)
        if family is not self.init.family:
            raise DomainError(
                f"init is {self.init.family.value} but config family is {family.value}"
            )
        object.__setattr__(self, "family", family)
        if not self.learning_rate > 0:
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise DomainError(f"momentum must lie in [0, 1), got {self.momentum}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise DomainError(f"steps must be a positive integer, got {self.steps}")
        if int(self.margin) != self.margin or self.margin < 0:
            raise DomainError(f"margin must be a non-negative integer, got {self.margin}")


@dataclass(frozen=True)
class TrajectoryPoint:
    step: int
    params: CovParams
    loss: float
    grad_norm: float


def _interior(shape, margin):
    h, w = shape
    if 2 * margin >= h or 2 * margin >= w:
        raise ShapeError(f"margin {margin} leaves no interior in a {h}x{w} image")
    return slice(margin, h - margin), slice(margin, w - margin)


def mse_loss(pred, target, margin: int = 0) -> float:
    """Mean squared difference over the interior ``margin`` pixels in from each side."""
    pred, target = as_image(pred), as_image(target)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {target.shape}")
    sy, sx = _interior(pred.shape, margin)
    d = pred[sy, sx] - target[sy, sx]
    return float(np.mean(d * d))


def blur_forward(reference, params: CovParams, radius=None) -> np.ndarray:
    k = gaussian_kernel(params_to_matrix(params), radius)
    return _convolve(as_image(reference), k.coeffs, BoundaryMode.ZERO_PAD_SAME)


def loss_and_grad(reference, blurred_target, params: CovParams, margin: int = DEFAULT_MARGIN,
                  radius=None):
    """MSE of ``reference * g(params)`` against the target, and its gradient.

    The support radius comes from the current covariance unless ``radius``
    pins it, and is held fixed for the evaluation.
    """
    ref, target = as_image(reference), as_image(blurred_target)
    if ref.shape != target.shape:
        raise ShapeError(f"shape mismatch: {ref.shape} vs {target.shape}")
    sy, sx = _interior(ref.shape, margin)
    kg = gaussian_kernel_with_grads(params, radius)
    k = kg.kernel
    padded = np.pad(ref, ((k.ry, k.ry), (k.rx, k.rx)))
    pred = _convolve(ref, k.coeffs, BoundaryMode.ZERO_PAD_SAME)
    resid = pred[sy, sx] - target[sy, sx]
    n = resid.size
    loss = float(np.sum(resid * resid) / n)

    # dL/dk(o) = (2/N) sum_p r(p) I(p - o): correlate the residual with the padded reference
    g = 2.0 * resid / n
    h, w = resid.shape
    dk = np.empty(k.shape)
    for i in range(k.shape[0]):
        oy = sy.start + 2 * k.ry - i
        for j in range(k.shape[1]):
            ox = sx.start + 2 * k.rx - j
            dk[i, j] = np.sum(g * padded[oy:oy + h, ox:ox + w])
    grad = np.array([np.sum(dk * dg) for dg in kg.grads])
    return loss, grad


def sgd_momentum_step(params, grad, velocity, lr: float, momentum: float):
    """``v' = momentum v - lr grad``; ``p' = p + v'``.

    ``params`` may be a :class:`CovParams` or an array; the same type is returned.
    """
    grad = np.asarray(grad, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    p = params.array if isinstance(params, CovParams) else np.asarray(params, dtype=np.float64)
    if grad.shape != p.shape or velocity.shape != p.shape:
        raise ShapeError(
            f"params, grad and velocity shapes differ: {p.shape}, {grad.shape}, {velocity.shape}"
        )
    v_new = momentum * velocity - lr * grad
    p_new = p + v_new
    if isinstance(params, CovParams):
        return params.with_array(p_new), v_new
    return p_new, v_new


def recover_blur(reference, blurred, config: RecoveryConfig) -> list:
    """Fit a Gaussian blur mapping ``reference`` onto ``blurred``.

    Runs ``config.steps`` momentum updates and returns ``steps + 1`` points:
    the initial iterate and every update after it.

    Raises
    ------
    DivergenceError
        If the loss turns non-finite or the kernel support outgrows the image;
        the iterates so far are attached.
    """
    ref, target = as_image(reference), as_image(blurred)
    if ref.shape != target.shape:
        raise ShapeError(f"shape mismatch: {ref.shape} vs {target.shape}")
    sy, sx = _interior(ref.shape, config.margin)
    if np.ptp(ref[sy, sx]) == 0.0:
        raise DomainError("reference interior is constant; the blur is not identifiable")

    params = config.init
    velocity = np.zeros(len(params))
    trajectory = []
    for step in range(config.steps + 1):
        try:
            cov = params_to_matrix(params)
        except DomainError as exc:
            raise DivergenceError(f"step {step}: covariance left the valid range ({exc})",
                                  trajectory) from exc
        ry, rx = support_radius(cov)
        if ry > max(ref.shape) or rx > max(ref.shape):
            raise DivergenceError(
                f"step {step}: kernel support {2 * ry + 1}x{2 * rx + 1} outgrew the image",
                trajectory,
            )
        loss, grad = loss_and_grad(ref, target, params, config.margin)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise DivergenceError(f"step {step}: non-finite loss {loss}", trajectory)
        trajectory.append(TrajectoryPoint(step, params, loss, float(np.linalg.norm(grad))))
        if step == config.steps:
            break
        try:
            params, velocity = sgd_momentum_step(
                params, grad, velocity, config.learning_rate, config.momentum
            )
        except DomainError as exc:
            raise DivergenceError(f"step {step}: update left the valid range ({exc})",
                                  trajectory) from exc
    if trajectory[-1].loss > trajectory[0].loss:
        log.warning("final loss %.3g exceeds initial loss %.3g", trajectory[-1].loss,
                    trajectory[0].loss)
    return trajectory
