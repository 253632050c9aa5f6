"""Exception hierarchy shared by every toolkit module."""

from typing import Any, Optional

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class ToolkitError(RuntimeError):
    """Base exception for toolkit failures."""


class ValidationError(ToolkitError, ValueError):
    """Raised when an input violates a documented precondition."""

    def __init__(
        self,
        message: str,
        parameter: Optional[str] = None,
        value: Any = None,
    ):
        self.parameter = parameter
        self.value = value
        self.message = message
        if parameter is not None:
            message = f"{parameter}={value!r}: {message}"
        super().__init__(message)


class GeometryError(ValidationError):
    """Raised when a corrugation geometry is malformed or discontinuous."""

    def __init__(
        self,
        message: str,
        parameter: Optional[str] = None,
        value: Any = None,
        index: Optional[int] = None,
    ):
        self.index = index
        super().__init__(message, parameter=parameter, value=value)


class DomainError(ValidationError):
    """Raised when an argument lies outside an operation's domain."""


class ConfigError(ValidationError):
    """Raised when a run configuration cannot be read or validated."""


class NumericalError(ToolkitError):
    """Base exception for numerical failures."""


class QuadratureError(NumericalError):
    """Raised when adaptive quadrature misses its tolerance."""

    def __init__(self, message: str, achieved: float):
        self.achieved = achieved
        super().__init__(f"{message} (achieved tolerance {achieved:.3g})")


class ConsistencyError(NumericalError):
    """Raised when a computed result breaks an internal invariant."""


class FitError(NumericalError):
    """Raised when a least-squares fit diverges."""

    def __init__(self, message: str, residual_norm: float):
        self.residual_norm = residual_norm
        super().__init__(f"{message} (last residual norm {residual_norm:.6g})")


class ArtifactError(ToolkitError):
    """Raised when an artifact cannot be read or written."""

    def __init__(self, message: str, path: Any):
        self.path = path
        super().__init__(f"{path}: {message}")


class OptimizationError(NumericalError):
    """Raised when no optimizer start point is feasible."""


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit status."""
    if isinstance(exc, (ValidationError, ArtifactError)):
        return EXIT_VALIDATION
    return EXIT_NUMERICAL
