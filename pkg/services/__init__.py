"""Package initialization for services."""
from .spectra_fusion_service import SpectraFusionService
from .dgp_service import DgpFcoService
from .emulator_service import EmulatorService
from .simulation_study_service import SimulationStudyService
from .artifact_service import ArtifactService

__all__ = [
    "SpectraFusionService",
    "DgpFcoService",
    "EmulatorService",
    "SimulationStudyService",
    "ArtifactService",
]
