"""LOESS smoother: locally weighted quadratic regression with tricube weights."""
import math

import numpy as np

import settings
from .errors import DimensionError, InvalidParameterError, SingularFitError
from .validate import as_vector, check_same_length

_DEGREE = 2


def loess_smooth(y: np.ndarray, x: np.ndarray, span: float = settings.LOESS_SPAN) -> np.ndarray:
    """
    Smooth y(x) with a local quadratic fit at every x_i.

    Each fit uses the nearest ceil(span * n) points (at least four, so three
    carry positive weight) with tricube weights scaled by the largest
    distance in the window.

    Args:
        y: Responses
        x: Inputs, same length as y
        span: Fraction of points in each local window, 0 < span <= 1

    Returns:
        Smoothed responses at x

    Raises:
        InvalidParameterError: If span is outside (0, 1]
        SingularFitError: If a local window has fewer than three distinct inputs
    """
    yv = as_vector(y, "y")
    xv = as_vector(x, "x")
    check_same_length(yv, xv, "x and y")
    if not (0 < span <= 1):
        raise InvalidParameterError(f"span must lie in (0, 1], got {span}")
    n = xv.shape[0]
    if n < 5:
        raise DimensionError(f"loess needs at least 5 points, got {n}")

    x_range = np.max(xv) - np.min(xv)
    if x_range == 0:
        raise SingularFitError("loess window is degenerate: all inputs are identical")
    x_scaled = (xv - np.mean(xv)) / x_range

    q = min(max(math.ceil(span * n), _DEGREE + 2), n)
    out = np.empty(n)
    for i in range(n):
        delta = np.abs(x_scaled - x_scaled[i])
        h = np.partition(delta, q - 1)[q - 1]
        if h == 0:
            raise SingularFitError(f"loess window at index {i} has zero width")
        u = np.minimum(delta / h, 1.0)
        w = (1.0 - u ** 3) ** 3
        keep = w > 0
        if np.unique(x_scaled[keep]).shape[0] <= _DEGREE:
            raise SingularFitError(f"loess window at index {i} has too few distinct inputs")

        t = x_scaled[keep] - x_scaled[i]
        design = np.vander(t, _DEGREE + 1, increasing=True)
        sw = np.sqrt(w[keep])
        coef, *_ = np.linalg.lstsq(design * sw[:, None], yv[keep] * sw, rcond=None)
        out[i] = coef[0]
    return out
