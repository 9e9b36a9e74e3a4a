"""Package initialization for utils."""
from .errors import (
    DgpFcoError,
    ConfigurationError,
    InvalidPathError,
    FileAccessError,
    GridMismatchError,
    SchemaVersionError,
    NumericalError,
    InvalidParameterError,
    DimensionError,
    DomainError,
    SingularMatrixError,
    SingularFitError,
    FitFailureError,
    InsufficientReplicatesError,
    CoverageError,
    MissingSourceError,
    SamplerError,
)
from .paths import validate_path, collect_files, resolve_output_dir, write_atomic
from .rng import substream
from .validate import (
    as_vector,
    as_square_matrix,
    check_same_length,
    require_positive,
    require_nonnegative,
    sanitize_identifier,
)

__all__ = [
    "DgpFcoError",
    "ConfigurationError",
    "InvalidPathError",
    "FileAccessError",
    "GridMismatchError",
    "SchemaVersionError",
    "NumericalError",
    "InvalidParameterError",
    "DimensionError",
    "DomainError",
    "SingularMatrixError",
    "SingularFitError",
    "FitFailureError",
    "InsufficientReplicatesError",
    "CoverageError",
    "MissingSourceError",
    "SamplerError",
    "validate_path",
    "collect_files",
    "resolve_output_dir",
    "write_atomic",
    "substream",
    "as_vector",
    "as_square_matrix",
    "check_same_length",
    "require_positive",
    "require_nonnegative",
    "sanitize_identifier",
]
