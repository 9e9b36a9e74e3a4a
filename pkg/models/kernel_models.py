from dataclasses import dataclass, field

import numpy as np

import settings
from utils.errors import InvalidParameterError
from utils.validate import as_vector


@dataclass(frozen=True)
class MaternParams:
    """Matern-5/2 kernel parameters; the lengthscale is in squared-distance units."""
    lengthscale: float
    scale: float = 1.0
    jitter: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.lengthscale) or self.lengthscale <= 0:
            raise InvalidParameterError(f"lengthscale must be positive, got {self.lengthscale}")
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise InvalidParameterError(f"scale must be positive, got {self.scale}")
        if not np.isfinite(self.jitter) or self.jitter < 0:
            raise InvalidParameterError(f"jitter must be nonnegative, got {self.jitter}")


@dataclass(frozen=True, eq=False)
class PowExpParams:
    """Power-exponential correlation parameters with log10 inverse lengthscales."""
    beta: np.ndarray
    alpha: float = settings.POWEXP_ALPHA
    scale: float = 1.0
    nugget: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta", as_vector(self.beta, "beta"))
        if not (0 < self.alpha <= 2):
            raise InvalidParameterError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise InvalidParameterError(f"scale must be positive, got {self.scale}")
        if not np.isfinite(self.nugget) or self.nugget < 0:
            raise InvalidParameterError(f"nugget must be nonnegative, got {self.nugget}")

    @property
    def dim(self) -> int:
        return self.beta.shape[0]

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "alpha": self.alpha,
            "scale": self.scale,
            "nugget": self.nugget,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PowExpParams":
        return cls(
            beta=np.asarray(data["beta"], dtype=float),
            alpha=float(data["alpha"]),
            scale=float(data["scale"]),
            nugget=float(data["nugget"]),
        )
