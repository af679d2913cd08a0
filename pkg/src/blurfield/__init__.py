"""Gaussian filters with log-Cholesky covariance, composed with free-form filters."""
from .covariance import (
    CovMatrix,
    CovParams,
    Family,
    cascade_add,
    cholesky_factor,
    cholesky_partials,
    format_cov_spec,
    matrix_partials,
    matrix_to_params,
    params_to_matrix,
    parse_cov_spec,
)
from .dynamic import (
    CovField,
    base_ring,
    bilinear_sample,
    dynamic_gauss_conv,
    dynamic_gauss_conv_backward,
    sparse_tap_kernel,
    warp_offsets,
)
from .errors import (
    BlurfieldError,
    DivergenceError,
    DomainError,
    FamilyError,
    NotSeparableError,
    ShapeError,
)
from .filtering import (
    BoundaryMode,
    blur_resample_conv,
    blurred_dilated_conv,
    compose_and_filter,
    conv2d,
    dilated_conv,
    gaussian_blur,
    separable_conv,
)
from .kernel import (
    KernelGrid,
    KernelWithGrads,
    compose_kernels,
    delta,
    dog_kernel,
    freeform,
    gaussian_kernel,
    gaussian_kernel_with_grads,
    separable_1d,
    support_radius,
)
from .optimize import (
    RecoveryConfig,
    TrajectoryPoint,
    loss_and_grad,
    mse_loss,
    recover_blur,
    sgd_momentum_step,
)

__version__ = "0.1.0"
