"""Gaussian linear algebra: factorization, densities, sampling, conditioning, scores.

Determinants always come from factor diagonals and solves from triangular
back-substitution; no dense inverse is ever formed.
"""
import logging
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

import settings
from models.gaussian_models import GaussianDist, ScoreReport
from .errors import DimensionError, SingularMatrixError
from .validate import as_square_matrix, as_vector, check_same_length

logger = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


def chol(
    cov: np.ndarray,
    jitter: float = 0.0,
    max_jitter: float = settings.MAX_JITTER,
    role: str = "covariance",
) -> Tuple[np.ndarray, float]:
    """
    Lower Cholesky factor of a symmetric matrix with jitter escalation.

    The first attempt adds ``jitter`` to the diagonal. On failure the jitter is
    raised to ``settings.DEFAULT_JITTER`` and then multiplied by
    ``settings.JITTER_FACTOR`` until it would exceed ``max_jitter``.

    Args:
        cov: Symmetric n x n matrix
        jitter: Initial diagonal jitter
        max_jitter: Largest jitter tried before giving up
        role: Name of the matrix, used in error messages

    Returns:
        (L, applied_jitter) with L @ L.T == cov + applied_jitter * I

    Raises:
        SingularMatrixError: If no jitter up to max_jitter yields a factorization
    """
    a = as_square_matrix(cov, role)
    n = a.shape[0]
    if jitter == 0.0 and not np.any(a):
        return np.zeros_like(a), 0.0

    current = float(jitter)
    while True:
        try:
            shifted = a + current * np.eye(n) if current > 0 else a
            factor = cholesky(shifted, lower=True, check_finite=True)
            if current > jitter:
                logger.warning("Factorized %s after raising jitter to %.1e", role, current)
            return factor, current
        except (LinAlgError, ValueError):
            nxt = max(current * settings.JITTER_FACTOR, settings.DEFAULT_JITTER)
            if nxt > max_jitter * (1 + 1e-12) or current >= max_jitter:
                raise SingularMatrixError(role)
            current = nxt


def _density_factor(dist: GaussianDist) -> np.ndarray:
    """Factor used for densities; a degenerate factor is floored at the default jitter."""
    diag = np.diag(dist.factor)
    if dist.dim and np.min(diag) > 0:
        return dist.factor
    factor, _ = chol(dist.cov, jitter=settings.DEFAULT_JITTER, role=dist.role)
    return factor


def mvn_logpdf(y: np.ndarray, dist: GaussianDist) -> float:
    """
    Log density of y under dist.

    Raises:
        DimensionError: If y and dist differ in dimension
    """
    yv = as_vector(y, "y")
    check_same_length(yv, dist.mean, "observation and mean")
    factor = _density_factor(dist)
    alpha = solve_triangular(factor, yv - dist.mean, lower=True, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(factor)))
    return float(-0.5 * (alpha @ alpha + logdet + yv.shape[0] * _LOG_2PI))


def mvn_sample(dist: GaussianDist, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """Draw count vectors mean + L z; returns an array of shape (count, n)."""
    z = rng.standard_normal((int(count), dist.dim))
    return dist.mean[None, :] + z @ dist.factor.T


def condition_joint(
    joint_mean: np.ndarray,
    joint_cov: np.ndarray,
    observed: np.ndarray,
    jitter: float = 0.0,
) -> GaussianDist:
    """
    Distribution of the leading block of a joint Gaussian given its trailing block.

    Args:
        joint_mean: Mean of the stacked vector (first block, observed block)
        joint_cov: Covariance of the stacked vector
        observed: Value of the trailing block

    Returns:
        GaussianDist of the first block conditional on the observation

    Raises:
        SingularMatrixError: If the observed-block covariance is singular
    """
    mu = as_vector(joint_mean, "joint mean")
    cov = as_square_matrix(joint_cov, "joint covariance")
    obs = as_vector(observed, "observation")
    total = mu.shape[0]
    n_obs = obs.shape[0]
    if cov.shape[0] != total or n_obs >= total:
        raise DimensionError(
            f"joint of size {total} cannot be split around an observation of length {n_obs}"
        )
    k = total - n_obs
    mu1, mu2 = mu[:k], mu[k:]
    s11, s12, s22 = cov[:k, :k], cov[:k, k:], cov[k:, k:]

    factor, _ = chol(s22, jitter=0.0, max_jitter=0.0, role="observed-block covariance")
    if np.min(np.diag(factor)) <= 0:
        raise SingularMatrixError("observed-block covariance")
    gain = cho_solve((factor, True), s12.T, check_finite=False).T
    mean = mu1 + gain @ (obs - mu2)
    cond = s11 - gain @ s12.T
    cond = 0.5 * (cond + cond.T)
    return GaussianDist(mean=mean, cov=cond, jitter=jitter, role="conditional covariance")


def log_score(y_true: np.ndarray, pred: GaussianDist) -> float:
    """Negative log predictive density; lower is better."""
    return -mvn_logpdf(y_true, pred)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean of squared differences."""
    av = as_vector(a, "a")
    bv = as_vector(b, "b")
    check_same_length(av, bv, "compared vectors")
    diff = av - bv
    return float(np.mean(diff * diff))


def score(y_true: np.ndarray, pred: GaussianDist, method: Optional[str] = None) -> ScoreReport:
    """Log score and MSE of a Gaussian prediction against a known curve."""
    return ScoreReport(log_score=log_score(y_true, pred), mse=mse(y_true, pred.mean), method=method)
