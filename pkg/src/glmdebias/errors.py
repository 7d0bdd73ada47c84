"""Exception hierarchy.

Two broad categories matter to callers: validation errors (bad inputs or
configuration, detectable before any numerics run) and numerical failures
(conditions that only surface during estimation). The CLI maps them to
exit codes 2 and 3 respectively.
"""


class GlmDebiasError(Exception):
    """Base class for all package errors."""


class ValidationError(GlmDebiasError, ValueError):
    """Invalid inputs, data, or configuration."""


class DomainError(ValidationError):
    """An argument value outside the function's domain."""


class DataValidationError(ValidationError):
    """A dataset that violates the design-matrix contract."""


class ConfigError(ValidationError):
    """An invalid run configuration."""


class DegenerateResponseError(ValidationError):
    """A response vector that cannot identify the model (e.g. constant binary y)."""


class NumericalError(GlmDebiasError):
    """Base class for failures of the numerical routines."""


class ConvergenceError(NumericalError):
    """An iterative solver failed to converge.

    Carries the last iterate so callers can inspect or report it.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class SingularHessianError(NumericalError):
    """The sample Hessian is singular or too ill-conditioned to invert."""


class DegenerateColumnError(NumericalError):
    """A node-wise residual variance collapsed to (numerical) zero."""


class NumericalDegeneracyError(NumericalError):
    """A variance or quadratic form that should be positive is not."""
