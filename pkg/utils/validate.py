"""Validation utilities."""
from typing import Any

import numpy as np

from .errors import DimensionError, InvalidParameterError


def as_vector(values: Any, name: str = "vector") -> np.ndarray:
    """Convert input to a 1-D float array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def as_square_matrix(values: Any, name: str = "matrix") -> np.ndarray:
    """Convert input to a square 2-D float array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_same_length(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    """Raise DimensionError when two vectors differ in length."""
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"{what} differ in length: {a.shape[0]} vs {b.shape[0]}")


def require_positive(value: float, name: str) -> float:
    """Return value if strictly positive and finite."""
    if not np.isfinite(value) or value <= 0:
        raise InvalidParameterError(f"{name} must be positive, got {value}")
    return float(value)


def require_nonnegative(value: float, name: str) -> float:
    """Return value if nonnegative and finite."""
    if not np.isfinite(value) or value < 0:
        raise InvalidParameterError(f"{name} must be nonnegative, got {value}")
    return float(value)


def sanitize_identifier(name: str) -> str:
    """Sanitize a cosmology identifier so it is safe as a file stem."""
    invalid_chars = r'<>:"/\|?* '
    for char in invalid_chars:
        name = name.replace(char, '_')

    name = name.strip('._')

    if len(name) > 200:
        name = name[:200]

    return name or "cosmology"
