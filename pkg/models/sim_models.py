from dataclasses import dataclass, field
from typing import Dict, List, Optional

import settings
from utils.errors import ConfigurationError

from .gaussian_models import ScoreReport

FUNCTION_IDS = ("f1", "f2")
VARIANCE_IDS = ("A", "B", "N")


@dataclass(frozen=True)
class SimScenario:
    """One cell of the simulation grid: test function, variance setting and batch size."""
    function_id: str = "f1"
    variance_id: str = "A"
    r: int = 5
    replicates: int = settings.SIM_REPLICATES
    seed: int = 0

    def __post_init__(self):
        if self.function_id not in FUNCTION_IDS:
            raise ConfigurationError(f"unknown test function '{self.function_id}'")
        if self.variance_id not in VARIANCE_IDS:
            raise ConfigurationError(f"unknown variance setting '{self.variance_id}'")
        if self.r < 1:
            raise ConfigurationError(f"r must be at least 1, got {self.r}")
        if self.replicates < 1:
            raise ConfigurationError(f"replicate count must be at least 1, got {self.replicates}")

    @property
    def label(self) -> str:
        return f"{self.function_id}{self.variance_id}_r{self.r}"


@dataclass(frozen=True)
class SimParams:
    """Drawn test-function parameters for one replicate."""
    m1: float
    u1: float
    m2: float
    u2: float


@dataclass
class SimResult:
    """Scores of every method on one replicate."""
    scenario: SimScenario
    replicate: int
    params: SimParams
    scores: Dict[str, ScoreReport] = field(default_factory=dict)
    errors: Dict[str, str] = field(default_factory=dict)

    def rows(self) -> List[dict]:
        """Tidy rows (scenario, rep, method, log_score, mse)."""
        out = []
        for method, report in self.scores.items():
            out.append(self._row(method, report.log_score, report.mse, None))
        for method, message in self.errors.items():
            out.append(self._row(method, float("nan"), float("nan"), message))
        return out

    def _row(self, method: str, log_score: float, mse: float, error: Optional[str]) -> dict:
        return {
            "scenario": self.scenario.label,
            "function": self.scenario.function_id,
            "variance": self.scenario.variance_id,
            "r": self.scenario.r,
            "rep": self.replicate,
            "method": method,
            "log_score": log_score,
            "mse": mse,
            "m1": self.params.m1,
            "u1": self.params.u1,
            "m2": self.params.m2,
            "u2": self.params.u2,
            "error": error or "",
        }
