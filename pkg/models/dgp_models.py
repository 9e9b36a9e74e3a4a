from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

import settings
from utils.errors import ConfigurationError, DimensionError
from utils.validate import as_vector

from .gaussian_models import GaussianDist


@dataclass
class DgpConfig:
    """Sampler settings and model-level prior means for one DGP fit."""
    iterations: int = settings.DGP_ITERATIONS
    burn_in: int = settings.DGP_BURN_IN
    thin: int = settings.DGP_THIN
    theta_s_prior: Tuple[float, float] = settings.THETA_S_PRIOR
    theta_w_prior: Tuple[float, float] = settings.THETA_W_PRIOR
    proposal_scale: float = settings.DGP_PROPOSAL_SCALE
    jitter: float = settings.DEFAULT_JITTER
    mu_s: Optional[np.ndarray] = None
    mu_w: Optional[np.ndarray] = None
    seed: Optional[int] = None
    draws_per_sample: int = settings.DGP_DRAWS_PER_SAMPLE
    store_draws: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be positive, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigurationError(
                f"burn-in {self.burn_in} leaves no samples out of {self.iterations} iterations"
            )
        if self.thin < 1:
            raise ConfigurationError(f"thinning stride must be at least 1, got {self.thin}")
        for name in ("theta_s_prior", "theta_w_prior"):
            shape, rate = getattr(self, name)
            if not (shape > 0 and rate > 0):
                raise ConfigurationError(f"{name} needs positive shape and rate, got {(shape, rate)}")
            setattr(self, name, (float(shape), float(rate)))
        if self.proposal_scale < 0:
            raise ConfigurationError("proposal scale must be nonnegative")
        if self.jitter < 0:
            raise ConfigurationError("jitter must be nonnegative")
        if self.draws_per_sample < 1:
            raise ConfigurationError("draws_per_sample must be at least 1")
        if self.mu_s is not None:
            self.mu_s = as_vector(self.mu_s, "mu_s")
        if self.mu_w is not None:
            self.mu_w = as_vector(self.mu_w, "mu_w")

    @property
    def retained(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))

    def to_dict(self) -> dict:
        data = asdict(self)
        for key in ("mu_s", "mu_w"):
            if data[key] is not None:
                data[key] = np.asarray(data[key]).tolist()
        data["theta_s_prior"] = list(self.theta_s_prior)
        data["theta_w_prior"] = list(self.theta_w_prior)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "DgpConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        for key in ("theta_s_prior", "theta_w_prior"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)


@dataclass(eq=False)
class WarpSample:
    """One retained Gibbs state."""
    z: np.ndarray
    W: np.ndarray
    theta_s: float
    theta_w: float
    loglik: float


@dataclass(eq=False)
class WarpChain:
    """Retained samples of one fit with acceptance rates of the two MH steps."""
    samples: List[WarpSample]
    x: np.ndarray
    theta_w_acceptance: float = 0.0
    theta_s_acceptance: float = 0.0
    cosmology_id: str = "cosmology"

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def W(self) -> np.ndarray:
        return np.vstack([s.W for s in self.samples])

    @property
    def theta_s(self) -> np.ndarray:
        return np.array([s.theta_s for s in self.samples])

    @property
    def theta_w(self) -> np.ndarray:
        return np.array([s.theta_w for s in self.samples])

    @property
    def loglik(self) -> np.ndarray:
        return np.array([s.loglik for s in self.samples])


@dataclass(eq=False)
class PosteriorSpectrum:
    """Pooled posterior of the latent spectrum: draws summary, bands and mixture moments."""
    T: int
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    k: np.ndarray
    mixture_mean: Optional[np.ndarray] = None
    mixture_cov: Optional[np.ndarray] = None
    draws: Optional[np.ndarray] = None
    w_mean: Optional[np.ndarray] = None
    theta_s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    theta_w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    skipped: int = 0
    cosmology_id: str = "cosmology"

    def __post_init__(self):
        self.mean = as_vector(self.mean, "mean")
        self.lower = as_vector(self.lower, "lower")
        self.upper = as_vector(self.upper, "upper")
        self.k = as_vector(self.k, "k")
        n = self.mean.shape[0]
        if not (self.lower.shape[0] == self.upper.shape[0] == self.k.shape[0] == n):
            raise DimensionError("posterior mean, bands and grid differ in length")
        if np.any(self.lower > self.mean) or np.any(self.mean > self.upper):
            raise ConfigurationError("credible bands must enclose the posterior mean")
        self.theta_s = np.asarray(self.theta_s, dtype=float)
        self.theta_w = np.asarray(self.theta_w, dtype=float)

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    def predictive(self) -> GaussianDist:
        """Gaussian with the mixture moments, falling back to the band-implied diagonal."""
        if self.mixture_mean is not None and self.mixture_cov is not None:
            return GaussianDist(mean=self.mixture_mean, cov=self.mixture_cov, role="posterior mixture covariance")
        half_width = (self.upper - self.lower) / (2.0 * 1.959963984540054)
        return GaussianDist(mean=self.mean, cov=np.diag(half_width ** 2), role="band-implied covariance")
