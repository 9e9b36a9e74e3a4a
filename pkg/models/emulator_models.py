from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from utils.errors import DimensionError, InvalidParameterError
from utils.validate import as_vector

from .kernel_models import PowExpParams


@dataclass(frozen=True, eq=False)
class InputNormalizer:
    """Per-parameter min/max scaling onto the unit cube."""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = as_vector(self.lower, "lower")
        upper = as_vector(self.upper, "upper")
        if lower.shape != upper.shape or np.any(upper < lower):
            raise InvalidParameterError("normalizer bounds must satisfy lower <= upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def fit(cls, psi: np.ndarray) -> "InputNormalizer":
        psi = np.atleast_2d(np.asarray(psi, dtype=float))
        return cls(lower=psi.min(axis=0), upper=psi.max(axis=0))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def _width(self) -> np.ndarray:
        width = self.upper - self.lower
        return np.where(width > 0, width, 1.0)

    def transform(self, psi: np.ndarray) -> np.ndarray:
        """Map parameters to the unit cube; constant columns map to 0."""
        psi = np.atleast_2d(np.asarray(psi, dtype=float))
        if psi.shape[1] != self.dim:
            raise DimensionError(f"expected {self.dim} parameters, got {psi.shape[1]}")
        return (psi - self.lower) / self._width

    def inverse(self, unit: np.ndarray) -> np.ndarray:
        unit = np.atleast_2d(np.asarray(unit, dtype=float))
        return self.lower + unit * self._width


@dataclass(eq=False)
class PCBasis:
    """Mean curve, truncated PC basis and training weights."""
    mean: np.ndarray
    B: np.ndarray
    Gamma: np.ndarray
    singular_values: np.ndarray
    p_eta: int

    def __post_init__(self):
        self.mean = as_vector(self.mean, "mean")
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.Gamma = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        self.singular_values = np.asarray(self.singular_values, dtype=float)
        if self.B.shape != (self.mean.shape[0], self.p_eta) or self.Gamma.shape[1] != self.p_eta:
            raise DimensionError(
                f"basis {self.B.shape} and weights {self.Gamma.shape} do not match p_eta={self.p_eta}"
            )

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    @property
    def m(self) -> int:
        return self.Gamma.shape[0]

    def reconstruct(self, weights: Optional[np.ndarray] = None) -> np.ndarray:
        """Curves S_bar + B w for each weight row (training weights by default)."""
        w = self.Gamma if weights is None else np.atleast_2d(np.asarray(weights, dtype=float))
        return self.mean[None, :] + w @ self.B.T


@dataclass(eq=False)
class WeightGp:
    """Fitted zero-mean power-exponential GP for one PC weight."""
    index: int
    psi: np.ndarray
    gamma: np.ndarray
    params: PowExpParams
    factor: np.ndarray
    alpha_vec: np.ndarray
    loglik: float = float("nan")

    def __post_init__(self):
        self.psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        self.gamma = as_vector(self.gamma, "gamma")
        if self.psi.shape[0] != self.gamma.shape[0]:
            raise DimensionError("weight GP inputs and weights differ in count")


@dataclass(eq=False)
class PCEmulator:
    """Basis plus one weight GP per retained component."""
    basis: PCBasis
    models: List[WeightGp]
    normalizer: InputNormalizer
    k: np.ndarray
    cosmology_ids: List[str]

    def __post_init__(self):
        if len(self.models) != self.basis.p_eta:
            raise DimensionError(f"{len(self.models)} weight GPs for {self.basis.p_eta} components")
