from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

import settings
from utils.errors import ConfigurationError
from utils.paths import resolve_output_dir, validate_path

from .dgp_models import DgpConfig
from .spectra_models import ErrorConvention, ValidityRanges

MODES = ("mira-titan", "camb", "synthetic")
COMMANDS = ("simulate", "fit", "basis", "emulate", "predict", "score")
SEEDED_COMMANDS = ("simulate", "fit")


@dataclass(frozen=True)
class SimulationSpec:
    """Scenario grid of the simulation study."""
    functions: List[str] = field(default_factory=lambda: ["f1", "f2"])
    variances: List[str] = field(default_factory=lambda: ["A", "B"])
    r_values: List[int] = field(default_factory=lambda: [5, 15])
    replicates: int = settings.SIM_REPLICATES
    baseline: bool = True


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs, from a YAML run file plus flags."""
    command: str
    inputs: List[str] = field(default_factory=list)
    output_dir: Optional[str] = "output"
    seed: Optional[int] = None
    jobs: int = 1
    mode: str = "synthetic"
    convention: Optional[str] = None
    input_space: str = "raw"
    detrend: str = "loess"
    r: Optional[int] = None
    anchor_precision: float = settings.ANCHOR_PRECISION
    ranges: Optional[Dict[str, Any]] = None
    dgp: DgpConfig = field(default_factory=DgpConfig)
    p_eta: int = settings.DEFAULT_P_ETA
    params_path: Optional[str] = None
    reference: List[str] = field(default_factory=list)
    simulation: SimulationSpec = field(default_factory=SimulationSpec)

    @classmethod
    def from_yaml(cls, path: str, command: str) -> "RunConfig":
        """
        Load a run file with flat sections run, data, dgp, emulator and simulation.

        Args:
            path: YAML file
            command: Subcommand being executed

        Raises:
            ConfigurationError: If the file cannot be parsed or holds unknown keys
        """
        config_path = validate_path(path)
        try:
            with config_path.open() as stream:
                raw = yaml.safe_load(stream) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Failed to parse {path}: {str(e)}")
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{path} must hold a mapping of sections")
        unknown = set(raw) - {"run", "data", "dgp", "emulator", "simulation"}
        if unknown:
            raise ConfigurationError(f"unknown sections in {path}: {sorted(unknown)}")

        flat: Dict[str, Any] = {}
        flat.update(raw.get("run") or {})
        flat.update(raw.get("data") or {})
        flat.update(raw.get("emulator") or {})
        if raw.get("dgp"):
            flat["dgp"] = raw["dgp"]
        if raw.get("simulation"):
            flat["simulation"] = raw["simulation"]
        return cls.from_dict(flat, command)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], command: str) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        values = dict(data)
        try:
            if isinstance(values.get("dgp"), dict):
                values["dgp"] = DgpConfig.from_dict(values["dgp"])
            if isinstance(values.get("simulation"), dict):
                values["simulation"] = SimulationSpec(**values["simulation"])
        except TypeError as e:
            raise ConfigurationError(f"Invalid configuration section: {str(e)}")
        if isinstance(values.get("inputs"), str):
            values["inputs"] = [values["inputs"]]
        if isinstance(values.get("reference"), str):
            values["reference"] = [values["reference"]]
        values["command"] = command
        return cls(**values)

    def with_overrides(self, **flags: Any) -> "RunConfig":
        """Return a copy where every flag that is not None replaces the file value."""
        updates = {k: v for k, v in flags.items() if v is not None and v != []}
        if "dgp_iterations" in updates or "dgp_burn_in" in updates or "dgp_thin" in updates:
            dgp = self.dgp.to_dict()
            dgp["iterations"] = updates.pop("dgp_iterations", dgp["iterations"])
            dgp["burn_in"] = updates.pop("dgp_burn_in", dgp["burn_in"])
            dgp["thin"] = updates.pop("dgp_thin", dgp["thin"])
            updates["dgp"] = DgpConfig.from_dict(dgp)
        return replace(self, **updates)

    def validate(self) -> "RunConfig":
        """
        Check the configuration before any work starts.

        Raises:
            ConfigurationError: On an unknown mode or convention, a missing seed or a bad count
            InvalidPathError: If a referenced input does not exist
        """
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command '{self.command}'")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown dataset mode '{self.mode}', expected one of {MODES}")
        if self.command in SEEDED_COMMANDS and self.seed is None:
            raise ConfigurationError(f"'{self.command}' requires a seed")
        if self.convention is not None and self.convention not in {c.value for c in ErrorConvention}:
            raise ConfigurationError(f"unknown error convention '{self.convention}'")
        if self.input_space not in ("raw", "emulation"):
            raise ConfigurationError(f"unknown input space '{self.input_space}'")
        if self.detrend not in ("loess", "mean"):
            raise ConfigurationError(f"unknown detrending '{self.detrend}'")
        if self.jobs == 0 or self.jobs < -1:
            raise ConfigurationError(f"jobs must be positive or -1, got {self.jobs}")
        if self.p_eta < 1:
            raise ConfigurationError(f"p_eta must be at least 1, got {self.p_eta}")
        for path in list(self.inputs) + list(self.reference):
            validate_path(path)
        if self.params_path is not None:
            validate_path(self.params_path)
        return self

    @property
    def error_convention(self) -> ErrorConvention:
        return ErrorConvention(self.convention or settings.DEFAULT_CONVENTION[self.mode])

    @property
    def low_runs(self) -> Optional[int]:
        if self.r is not None:
            return self.r
        return {"mira-titan": settings.MIRA_TITAN_LOW_RUNS, "camb": settings.CAMB_LOW_RUNS}.get(self.mode)

    def validity_ranges(self) -> ValidityRanges:
        """Configured ranges, or the preset of the dataset mode."""
        if self.ranges is not None:
            try:
                return ValidityRanges.from_dict(self.ranges, anchor_precision=self.anchor_precision)
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigurationError(f"Invalid validity ranges: {str(e)}")
        preset = settings.CAMB_RANGES if self.mode == "camb" else settings.MIRA_TITAN_RANGES
        return ValidityRanges.from_dict(preset, anchor_precision=self.anchor_precision)

    def output_path(self) -> Path:
        """Output directory; DGPFCO_OUTPUT_DIR wins over the run file."""
        return resolve_output_dir(self.output_dir, settings.OUTPUT_DIR)
