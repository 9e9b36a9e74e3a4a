"""Package initialization for models."""
from .result import CommandResult
from .kernel_models import MaternParams, PowExpParams
from .gaussian_models import GaussianDist, ScoreReport
from .spectra_models import (
    ErrorConvention,
    WavenumberGrid,
    SpectraBatch,
    PrecisionModel,
    KRange,
    ValidityRanges,
    Lambdas,
    WeightedSpectrum,
)
from .dgp_models import DgpConfig, WarpSample, WarpChain, PosteriorSpectrum
from .emulator_models import InputNormalizer, PCBasis, WeightGp, PCEmulator
from .sim_models import SimScenario, SimParams, SimResult
from .run_config import RunConfig, SimulationSpec

__all__ = [
    "CommandResult",
    "MaternParams",
    "PowExpParams",
    "GaussianDist",
    "ScoreReport",
    "ErrorConvention",
    "WavenumberGrid",
    "SpectraBatch",
    "PrecisionModel",
    "KRange",
    "ValidityRanges",
    "Lambdas",
    "WeightedSpectrum",
    "DgpConfig",
    "WarpSample",
    "WarpChain",
    "PosteriorSpectrum",
    "InputNormalizer",
    "PCBasis",
    "WeightGp",
    "PCEmulator",
    "SimScenario",
    "SimParams",
    "SimResult",
    "RunConfig",
    "SimulationSpec",
]
