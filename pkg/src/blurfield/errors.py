"""Exception types shared across the package."""


class BlurfieldError(Exception):
    """Base class for all package errors."""


class DomainError(BlurfieldError, ValueError):
    """A numerical value lies outside the domain of an operation (e.g. non-SPD)."""


class FamilyError(DomainError):
    """A covariance does not belong to the requested family."""


class NotSeparableError(DomainError):
    """A covariance with a non-zero off-diagonal term was asked to separate."""


class ShapeError(BlurfieldError, ValueError):
    """Array shapes are inconsistent or too small for the requested operation."""


class DivergenceError(BlurfieldError, RuntimeError):
    """Optimization produced a non-finite loss.

    The iterates recorded before the failure are kept on ``trajectory``.
    """

    def __init__(self, message, trajectory=()):
        super().__init__(message)
        self.trajectory = list(trajectory)
