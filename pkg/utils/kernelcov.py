"""Kernel evaluations and covariance-matrix construction.

The Matern-5/2 kernel receives the squared Euclidean distance d as its first
argument and theta in the same squared units, so ``K(||a - b||^2, theta)`` is
what every caller evaluates, with r = sqrt(5 d / theta) and
K = (1 + r + r^2 / 3) exp(-r).
"""
from typing import Union

import numpy as np

from models.kernel_models import MaternParams, PowExpParams
from .errors import DimensionError, InvalidParameterError
from .validate import as_vector

ArrayLike = Union[float, np.ndarray]

_TINY = np.finfo(float).tiny


def _flush_underflow(values: np.ndarray) -> np.ndarray:
    values[values < _TINY] = 0.0
    return values


def matern52(d: ArrayLike, theta: float) -> ArrayLike:
    """
    Evaluate the Matern-5/2 correlation at squared distance(s) d.

    d is ||a - b||^2, not ||a - b||; r = sqrt(5 d / theta) keeps K positive definite.

    Args:
        d: Nonnegative squared input distance or array of them
        theta: Positive lengthscale

    Returns:
        Correlation(s) in (0, 1], equal to 1 exactly where d == 0

    Raises:
        InvalidParameterError: If theta is not positive or d is negative
    """
    if not np.isfinite(theta) or theta <= 0:
        raise InvalidParameterError(f"Matern lengthscale must be positive, got {theta}")
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < 0):
        raise InvalidParameterError("Matern distance must be nonnegative")

    r = np.sqrt(5.0 * d_arr / theta)
    with np.errstate(under="ignore", over="ignore", invalid="ignore"):
        k = (1.0 + r + r * r / 3.0) * np.exp(-r)
    k = np.where(np.isfinite(k), k, 0.0)
    k = _flush_underflow(np.atleast_1d(k))
    if np.ndim(d) == 0:
        return float(k[0])
    return k.reshape(d_arr.shape)


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared distances between two 1-D point sets."""
    diff = np.subtract.outer(as_vector(a, "points"), as_vector(b, "points"))
    return diff * diff


def matern52_cross(a: np.ndarray, b: np.ndarray, params: MaternParams) -> np.ndarray:
    """Cross-covariance sigma^2 * K((a_i - b_j)^2, theta), without jitter."""
    return params.scale * matern52(squared_distances(a, b), params.lengthscale)


def matern52_matrix(points: np.ndarray, params: MaternParams) -> np.ndarray:
    """
    Build the covariance of a 1-D point set under a Matern-5/2 kernel.

    Args:
        points: n input locations
        params: Lengthscale, scale and diagonal jitter

    Returns:
        Symmetric n x n matrix sigma^2 K + jitter I
    """
    pts = as_vector(points, "points")
    if pts.shape[0] < 1:
        raise DimensionError("matern52_matrix needs at least one point")
    cov = matern52_cross(pts, pts, params)
    cov = 0.5 * (cov + cov.T)
    cov[np.diag_indices_from(cov)] += params.jitter
    return cov


def _powexp_exponent(diff: np.ndarray, params: PowExpParams) -> np.ndarray:
    weights = np.power(10.0, params.beta)
    return np.sum(weights * np.abs(diff) ** params.alpha, axis=-1)


def powexp_corr(psi_u: np.ndarray, psi_v: np.ndarray, params: PowExpParams) -> float:
    """
    Power-exponential correlation prod_j exp(-10^beta_j |u_j - v_j|^alpha).

    Raises:
        DimensionError: If the inputs and beta differ in length
    """
    u = as_vector(psi_u, "psi_u")
    v = as_vector(psi_v, "psi_v")
    if u.shape[0] != params.dim or v.shape[0] != params.dim:
        raise DimensionError(
            f"inputs of length {u.shape[0]} and {v.shape[0]} do not match beta of length {params.dim}"
        )
    with np.errstate(under="ignore"):
        value = float(np.exp(-_powexp_exponent(u - v, params)))
    return 0.0 if value < _TINY else value


def powexp_matrix(psi_a: np.ndarray, psi_b: np.ndarray, params: PowExpParams) -> np.ndarray:
    """Correlation matrix between rows of psi_a (m x p) and psi_b (q x p)."""
    a = np.atleast_2d(np.asarray(psi_a, dtype=float))
    b = np.atleast_2d(np.asarray(psi_b, dtype=float))
    if a.shape[1] != params.dim or b.shape[1] != params.dim:
        raise DimensionError(
            f"inputs with {a.shape[1]} and {b.shape[1]} columns do not match beta of length {params.dim}"
        )
    diff = a[:, None, :] - b[None, :, :]
    with np.errstate(under="ignore"):
        corr = np.exp(-_powexp_exponent(diff, params))
    return _flush_underflow(corr)
