"""Synthetic test images."""
from __future__ import annotations

import numpy as np

from .covariance import CovMatrix
from .errors import DomainError
from .filtering import conv2d
from .kernel import gaussian_kernel


def smooth_texture(size: int, seed: int, shape=None) -> np.ndarray:
    """Uniform noise smoothed by a unit Gaussian, standardized to zero mean and unit variance.

    The smoothing band-limits the content so that blur size is identifiable;
    standardizing fixes the loss scale independently of the image size.
    """
    shape = (size, size) if shape is None else tuple(shape)
    rng = np.random.default_rng(seed)
    noise = rng.uniform(0.0, 1.0, size=shape)
    tex = conv2d(noise, gaussian_kernel(CovMatrix.spherical(1.0)), "reflect_same")
    return (tex - tex.mean()) / tex.std()


def to_unit_range(image, spread: float = 8.0) -> np.ndarray:
    """Affinely map a standardized image into [0, 1]: ``0.5 + image / spread``, clipped."""
    return np.clip(0.5 + np.asarray(image) / spread, 0.0, 1.0)


def checkerboard(size: int, period: int = 2) -> np.ndarray:
    if period < 2 or period % 2:
        raise DomainError(f"checkerboard period must be an even integer >= 2, got {period}")
    cell = period // 2
    y, x = np.indices((size, size))
    return ((y // cell + x // cell) % 2).astype(np.float64)


def gaussian_bump(size: int, sigma: float = None) -> np.ndarray:
    """Isotropic bump of height 1 peaking at pixel ``(size // 2, size // 2)``."""
    sigma = size / 8.0 if sigma is None else sigma
    c = size // 2
    y, x = np.indices((size, size))
    return np.exp(-((y - c) ** 2 + (x - c) ** 2) / (2.0 * sigma * sigma))
