"""Custom error classes for the spectrum fusion and emulation pipeline."""
from typing import Any, Optional


class DgpFcoError(Exception):
    """Base exception for pipeline operations."""
    exit_code = 1


class ConfigurationError(DgpFcoError):
    """Raised when a run or sampler configuration is invalid."""
    exit_code = 2


class InvalidPathError(ConfigurationError):
    """Raised when provided path is invalid."""
    pass


class FileAccessError(ConfigurationError):
    """Raised when an input file cannot be read or parsed."""
    pass


class GridMismatchError(ConfigurationError):
    """Raised when two curves are not on the same wavenumber grid."""
    pass


class SchemaVersionError(DgpFcoError):
    """Raised when an artifact carries an unsupported schema version."""
    exit_code = 4


class NumericalError(DgpFcoError):
    """Base class for failures of the numerical core."""
    exit_code = 3


class InvalidParameterError(NumericalError, ValueError):
    """Raised when a kernel or model parameter is out of range."""
    pass


class DimensionError(NumericalError, ValueError):
    """Raised when array shapes disagree."""
    pass


class DomainError(NumericalError, ValueError):
    """Raised when an input lies outside the domain of a transform."""
    pass


class SingularMatrixError(NumericalError):
    """Raised when a covariance cannot be factorized, even after jitter."""

    def __init__(self, role: str, message: Optional[str] = None):
        self.role = role
        super().__init__(message or f"{role} is not positive definite after jitter escalation")


class SingularFitError(NumericalError):
    """Raised when a local regression window is degenerate."""
    pass


class FitFailureError(NumericalError):
    """Raised when every start of a likelihood optimization fails."""

    def __init__(self, message: str, best_params: Any = None):
        self.best_params = best_params
        super().__init__(message)


class InsufficientReplicatesError(NumericalError):
    """Raised when too few low-resolution runs are available."""
    pass


class CoverageError(NumericalError):
    """Raised when a wavenumber is covered by no data source."""
    pass


class MissingSourceError(NumericalError):
    """Raised when a curve with nonzero precision weight is absent."""
    pass


class SamplerError(NumericalError):
    """Raised when the Gibbs sampler cannot continue."""

    def __init__(self, message: str, iteration: Optional[int] = None):
        self.iteration = iteration
        super().__init__(message)
