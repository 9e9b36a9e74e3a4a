from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from utils.errors import DimensionError, InvalidParameterError
from utils.validate import as_square_matrix, as_vector


@dataclass(frozen=True, eq=False)
class GaussianDist:
    """Multivariate normal with a cached lower-triangular factor.

    The factor satisfies ``factor @ factor.T == cov + jitter * I`` where ``jitter``
    is the amount actually applied during factorization. An all-zero covariance
    factorizes to a zero factor (a point mass).
    """
    mean: np.ndarray
    cov: np.ndarray
    jitter: float = 0.0
    role: str = "covariance"
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        from utils.gaussmath import chol

        mean = as_vector(self.mean, "mean")
        cov = as_square_matrix(self.cov, "cov")
        if cov.shape[0] != mean.shape[0]:
            raise DimensionError(
                f"mean has length {mean.shape[0]} but cov is {cov.shape[0]}x{cov.shape[1]}"
            )
        scale = max(np.max(np.abs(cov)), 1.0)
        if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
            raise InvalidParameterError(f"{self.role} is not symmetric")
        cov = 0.5 * (cov + cov.T)
        factor, applied = chol(cov, jitter=self.jitter, role=self.role)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "factor", factor)
        object.__setattr__(self, "jitter", applied)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.cov).copy()


@dataclass
class ScoreReport:
    """Accuracy and calibration of one prediction against a known curve."""
    log_score: float
    mse: float
    method: Optional[str] = None

    def __post_init__(self):
        if self.mse < 0:
            raise InvalidParameterError(f"mse must be nonnegative, got {self.mse}")
