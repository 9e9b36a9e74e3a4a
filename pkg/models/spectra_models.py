import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

import settings
from utils.errors import ConfigurationError, DimensionError, InvalidParameterError
from utils.validate import as_vector


class ErrorConvention(str, Enum):
    """How the error covariance of the weighted average is assembled."""
    DIAGONAL = "diagonal"
    LITERAL = "literal"
    PROPAGATED = "propagated"


@dataclass(frozen=True, eq=False)
class WavenumberGrid:
    """Strictly increasing wavenumbers k (Mpc^-1) and x = log10(k)."""
    k: np.ndarray
    x: np.ndarray = field(init=False)

    def __post_init__(self):
        k = as_vector(self.k, "k")
        if k.shape[0] < 2:
            raise DimensionError("a wavenumber grid needs at least two points")
        if np.any(k <= 0) or not np.all(np.isfinite(k)):
            raise InvalidParameterError("wavenumbers must be positive and finite")
        if np.any(np.diff(k) <= 0):
            raise InvalidParameterError("wavenumbers must be strictly increasing")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "x", np.log10(k))

    @classmethod
    def from_x(cls, x: np.ndarray) -> "WavenumberGrid":
        grid = cls(k=np.power(10.0, as_vector(x, "x")))
        # keep the caller's x exactly; k only needs to be consistent with it
        object.__setattr__(grid, "x", as_vector(x, "x").copy())
        return grid

    @property
    def n(self) -> int:
        return self.k.shape[0]

    def matches(self, other: "WavenumberGrid") -> bool:
        return self.n == other.n and np.array_equal(self.k, other.k)


@dataclass(eq=False)
class SpectraBatch:
    """One cosmology's raw curves on a shared grid."""
    grid: WavenumberGrid
    y_low: Optional[np.ndarray] = None
    y_p: Optional[np.ndarray] = None
    y_high: Optional[np.ndarray] = None
    y_truth: Optional[np.ndarray] = None
    cosmology_id: str = "cosmology"

    def __post_init__(self):
        n = self.grid.n
        for name in ("y_p", "y_high", "y_truth"):
            value = getattr(self, name)
            if value is not None:
                vec = as_vector(value, name)
                if vec.shape[0] != n:
                    raise DimensionError(f"{name} has length {vec.shape[0]}, grid has {n}")
                setattr(self, name, vec)
        if self.y_low is not None:
            low = np.atleast_2d(np.asarray(self.y_low, dtype=float))
            if low.shape[1] != n or low.shape[0] < 1:
                raise DimensionError(f"y_low has shape {low.shape}, expected (r, {n})")
            self.y_low = low

    @property
    def r(self) -> int:
        return 0 if self.y_low is None else self.y_low.shape[0]

    @property
    def y_low_mean(self) -> Optional[np.ndarray]:
        return None if self.y_low is None else self.y_low.mean(axis=0)


@dataclass(eq=False)
class PrecisionModel:
    """Per-wavenumber precision of one low-resolution run and the high-resolution multiplier."""
    p: np.ndarray
    c: float
    intercept: float
    slope: float
    high_offset: float = 0.0

    def __post_init__(self):
        self.p = as_vector(self.p, "p")
        if np.any(self.p <= 0) or not np.all(np.isfinite(self.p)):
            raise InvalidParameterError("precisions must be positive and finite")
        if not np.isfinite(self.c) or self.c <= 0:
            raise InvalidParameterError(f"high-resolution multiplier must be positive, got {self.c}")

    @classmethod
    def unit(cls, n: int) -> "PrecisionModel":
        """Precision one everywhere, c = 1."""
        return cls(p=np.ones(n), c=1.0, intercept=0.0, slope=0.0)


@dataclass(frozen=True)
class KRange:
    """Wavenumber interval [lower, upper), optionally closed on the right."""
    lower: float
    upper: float
    upper_inclusive: bool = False

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ConfigurationError(f"empty wavenumber range [{self.lower}, {self.upper})")

    def contains(self, k: np.ndarray) -> np.ndarray:
        upper_ok = k <= self.upper if self.upper_inclusive else k < self.upper
        return (k >= self.lower) & upper_ok

    def to_list(self) -> list:
        return [self.lower, self.upper, self.upper_inclusive]


@dataclass(frozen=True)
class ValidityRanges:
    """Where each data type is trusted, and the anchor precision."""
    anchor: KRange
    low: KRange
    high: KRange
    anchor_source: str = "perturbation"
    anchor_precision: float = settings.ANCHOR_PRECISION

    def __post_init__(self):
        if self.anchor_source not in ("perturbation", "truth"):
            raise ConfigurationError(f"unknown anchor source '{self.anchor_source}'")
        if not self.anchor_precision > 0:
            raise ConfigurationError("anchor precision must be positive")

    @classmethod
    def from_dict(cls, data: dict, anchor_precision: float = settings.ANCHOR_PRECISION) -> "ValidityRanges":
        def _range(value) -> KRange:
            lower, upper, *rest = value
            upper = math.inf if upper is None else float(upper)
            return KRange(float(lower), upper, bool(rest[0]) if rest else False)

        return cls(
            anchor=_range(data["anchor"]),
            low=_range(data["low"]),
            high=_range(data["high"]),
            anchor_source=data.get("anchor_source", "perturbation"),
            anchor_precision=float(data.get("anchor_precision", anchor_precision)),
        )

    @classmethod
    def mira_titan(cls) -> "ValidityRanges":
        return cls.from_dict(settings.MIRA_TITAN_RANGES)

    @classmethod
    def camb(cls) -> "ValidityRanges":
        return cls.from_dict(settings.CAMB_RANGES)


@dataclass(eq=False)
class Lambdas:
    """Diagonal precisions of the anchor, low-resolution mean and high-resolution curves."""
    anchor: np.ndarray
    low: np.ndarray
    high: np.ndarray
    anchor_source: str = "perturbation"

    @property
    def total(self) -> np.ndarray:
        return self.anchor + self.low + self.high

    def scaled(self, factor: float) -> "Lambdas":
        return Lambdas(self.anchor * factor, self.low * factor, self.high * factor, self.anchor_source)


@dataclass(eq=False)
class WeightedSpectrum:
    """Fused observation with its error covariance and total precision."""
    ybar: np.ndarray
    lam: np.ndarray
    sigma_eps: np.ndarray
    convention: ErrorConvention
    grid: WavenumberGrid
    cosmology_id: str = "cosmology"
    error_scale: Optional[float] = None
    error_lengthscale: Optional[float] = None

    def __post_init__(self):
        n = self.grid.n
        self.ybar = as_vector(self.ybar, "ybar")
        self.lam = as_vector(self.lam, "lam")
        if self.ybar.shape[0] != n or self.lam.shape[0] != n or self.sigma_eps.shape != (n, n):
            raise DimensionError("weighted spectrum components do not match the grid")
        if np.any(self.lam <= 0):
            raise InvalidParameterError("every wavenumber needs positive total precision")
