"""Versioned JSON artifacts and CSV tables exchanged between CLI commands."""
import json
import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import cho_solve

import settings
from models import (
    DgpConfig,
    InputNormalizer,
    PCBasis,
    PCEmulator,
    PosteriorSpectrum,
    PowExpParams,
    WarpChain,
    WeightGp,
)
from utils import (
    ConfigurationError,
    DgpFcoError,
    FileAccessError,
    SchemaVersionError,
    sanitize_identifier,
    write_atomic,
)
from utils.gaussmath import chol
from utils.kernelcov import powexp_matrix

logger = logging.getLogger(__name__)

_PSI_COLUMN = re.compile(r"^psi_(\d+)$")


def _major(version: str) -> str:
    return str(version).split(".", 1)[0]


def _array(values) -> Optional[np.ndarray]:
    return None if values is None else np.asarray(values, dtype=float)


def _list(values: Optional[np.ndarray]):
    return None if values is None else np.asarray(values, dtype=float).tolist()


def dump_artifact(kind: str, payload: dict, path: Path) -> Path:
    """Write a JSON artifact with its schema version and kind."""
    document = {"schema_version": settings.ARTIFACT_SCHEMA_VERSION, "kind": kind}
    document.update(payload)
    write_atomic(path, json.dumps(document, indent=1, sort_keys=True) + "\n")
    logger.debug("Wrote %s artifact %s", kind, path)
    return path


def load_artifact(path: Path, kind: str) -> dict:
    """
    Read a JSON artifact and check its version and kind.

    Raises:
        FileAccessError: If the file is not valid JSON
        SchemaVersionError: If the major version differs or is missing
        ConfigurationError: If the artifact is of another kind
    """
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise FileAccessError(f"Cannot read artifact {path}: {str(e)}")
    version = document.get("schema_version") if isinstance(document, dict) else None
    if version is None or _major(version) != _major(settings.ARTIFACT_SCHEMA_VERSION):
        raise SchemaVersionError(
            f"{path} has schema version {version!r}; this build reads {settings.ARTIFACT_SCHEMA_VERSION}"
        )
    if document.get("kind") != kind:
        raise ConfigurationError(f"{path} is a {document.get('kind')!r} artifact, expected {kind!r}")
    return document


# ============================================================================
# Posterior
# ============================================================================

def posterior_to_dict(post: PosteriorSpectrum, cfg: DgpConfig, chain: Optional[WarpChain] = None) -> dict:
    data = {
        "cosmology_id": post.cosmology_id,
        "config": cfg.to_dict(),
        "T": post.T,
        "skipped": post.skipped,
        "k": _list(post.k),
        "mean": _list(post.mean),
        "lower": _list(post.lower),
        "upper": _list(post.upper),
        "mixture_mean": _list(post.mixture_mean),
        "mixture_cov": _list(post.mixture_cov),
        "w_mean": _list(post.w_mean),
        "theta_s": _list(post.theta_s),
        "theta_w": _list(post.theta_w),
        "draws": _list(post.draws),
    }
    if chain is not None:
        data["acceptance"] = {"theta_w": chain.theta_w_acceptance, "theta_s": chain.theta_s_acceptance}
    return data


def posterior_from_dict(data: dict) -> PosteriorSpectrum:
    return PosteriorSpectrum(
        T=int(data["T"]),
        mean=_array(data["mean"]),
        lower=_array(data["lower"]),
        upper=_array(data["upper"]),
        k=_array(data["k"]),
        mixture_mean=_array(data.get("mixture_mean")),
        mixture_cov=_array(data.get("mixture_cov")),
        draws=_array(data.get("draws")),
        w_mean=_array(data.get("w_mean")),
        theta_s=_array(data.get("theta_s") or []),
        theta_w=_array(data.get("theta_w") or []),
        skipped=int(data.get("skipped", 0)),
        cosmology_id=data["cosmology_id"],
    )


# ============================================================================
# Basis and emulator
# ============================================================================

def basis_to_dict(basis: PCBasis, k: np.ndarray, cosmology_ids: List[str]) -> dict:
    return {
        "k": _list(k),
        "cosmology_ids": list(cosmology_ids),
        "mean": _list(basis.mean),
        "B": _list(basis.B),
        "Gamma": _list(basis.Gamma),
        "singular_values": _list(basis.singular_values),
        "p_eta": basis.p_eta,
    }


def basis_from_dict(data: dict) -> Tuple[PCBasis, np.ndarray, List[str]]:
    basis = PCBasis(
        mean=_array(data["mean"]),
        B=_array(data["B"]),
        Gamma=_array(data["Gamma"]),
        singular_values=_array(data["singular_values"]),
        p_eta=int(data["p_eta"]),
    )
    return basis, _array(data["k"]), list(data["cosmology_ids"])


def emulator_to_dict(emulator: PCEmulator) -> dict:
    data = basis_to_dict(emulator.basis, emulator.k, emulator.cosmology_ids)
    data["normalizer"] = {"lower": _list(emulator.normalizer.lower), "upper": _list(emulator.normalizer.upper)}
    data["psi"] = _list(emulator.models[0].psi) if emulator.models else []
    data["models"] = [dict(model.params.to_dict(), index=model.index) for model in emulator.models]
    return data


def _rebuild_weight_gp(index: int, psi: np.ndarray, gamma: np.ndarray, params: PowExpParams) -> WeightGp:
    corr = powexp_matrix(psi, psi, PowExpParams(params.beta, params.alpha))
    corr[np.diag_indices_from(corr)] += params.nugget
    factor, _ = chol(corr, role="weight correlation")
    return WeightGp(
        index=index, psi=psi, gamma=gamma, params=params, factor=factor,
        alpha_vec=cho_solve((factor, True), gamma, check_finite=False),
    )


def emulator_from_dict(data: dict) -> PCEmulator:
    basis, k, ids = basis_from_dict(data)
    psi = np.atleast_2d(_array(data["psi"]))
    models = [
        _rebuild_weight_gp(int(entry["index"]), psi, basis.Gamma[:, int(entry["index"])], PowExpParams.from_dict(entry))
        for entry in data["models"]
    ]
    normalizer = InputNormalizer(lower=_array(data["normalizer"]["lower"]), upper=_array(data["normalizer"]["upper"]))
    return PCEmulator(basis=basis, models=models, normalizer=normalizer, k=k, cosmology_ids=ids)


# ============================================================================
# CSV tables
# ============================================================================

def read_params_csv(path: Path) -> Tuple[List[str], np.ndarray]:
    """
    Read cosmology parameters with columns cosmology_id, psi_1..psi_p.

    Raises:
        ConfigurationError: If the file has no rows or no psi columns
    """
    try:
        frame = pd.read_csv(path, dtype={"cosmology_id": str})
    except pd.errors.EmptyDataError:
        raise ConfigurationError(f"{path} is empty")
    except Exception as e:
        raise FileAccessError(f"Cannot read {path}: {str(e)}")
    columns = sorted((c for c in frame.columns if _PSI_COLUMN.match(c)), key=lambda c: int(_PSI_COLUMN.match(c).group(1)))
    if frame.empty or not columns or "cosmology_id" not in frame.columns:
        raise ConfigurationError(f"{path} needs a cosmology_id column, psi_1..psi_p columns and at least one row")
    return frame["cosmology_id"].tolist(), frame[columns].to_numpy(dtype=float)


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    write_atomic(path, frame.to_csv(index=False, float_format=settings.CSV_FLOAT_FORMAT))
    return path


def write_summary_csv(post: PosteriorSpectrum, path: Path) -> Path:
    return write_frame(pd.DataFrame({"k": post.k, "mean": post.mean, "lower": post.lower, "upper": post.upper}), path)


def predictions_frame(ids: List[str], k: np.ndarray, curves: np.ndarray) -> pd.DataFrame:
    """Long table cosmology_id, k, value."""
    n = k.shape[0]
    return pd.DataFrame({
        "cosmology_id": np.repeat(np.asarray(ids, dtype=object), n),
        "k": np.tile(k, len(ids)),
        "value": np.asarray(curves, dtype=float).reshape(-1),
    })


def read_curves_csv(path: Path) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Read a long table back into {cosmology_id: (k, values)}."""
    try:
        frame = pd.read_csv(path, dtype={"cosmology_id": str})
    except Exception as e:
        raise FileAccessError(f"Cannot read {path}: {str(e)}")
    missing = {"cosmology_id", "k", "value"} - set(frame.columns)
    if missing:
        raise FileAccessError(f"{path} lacks columns {sorted(missing)}")
    return {
        cid: (group["k"].to_numpy(dtype=float), group["value"].to_numpy(dtype=float))
        for cid, group in frame.groupby("cosmology_id", sort=False)
    }


class ArtifactService:
    """Service for naming, writing and reading run artifacts under one output directory."""

    def __init__(self, output_dir: Path):
        """Initialize with the output directory."""
        self.output_dir = Path(output_dir)

    def _path(self, name: str) -> Path:
        return self.output_dir / name

    def save_posterior(
        self,
        post: PosteriorSpectrum,
        cfg: DgpConfig,
        chain: Optional[WarpChain] = None,
        extra: Optional[dict] = None,
    ) -> Path:
        """Write posterior_<id>.json and summary_<id>.csv; returns the JSON path."""
        stem = sanitize_identifier(post.cosmology_id)
        write_summary_csv(post, self._path(f"summary_{stem}.csv"))
        payload = posterior_to_dict(post, cfg, chain)
        payload.update(extra or {})
        return dump_artifact("posterior", payload, self._path(f"posterior_{stem}.json"))

    def save_basis(self, basis: PCBasis, k: np.ndarray, cosmology_ids: List[str]) -> Path:
        return dump_artifact("basis", basis_to_dict(basis, k, cosmology_ids), self._path("basis.json"))

    def save_emulator(self, emulator: PCEmulator) -> Path:
        return dump_artifact("emulator", emulator_to_dict(emulator), self._path("emulator.json"))

    def save_table(self, frame: pd.DataFrame, name: str) -> Path:
        return write_frame(frame, self._path(name))

    @staticmethod
    def load_posterior(path: Path) -> PosteriorSpectrum:
        try:
            return posterior_from_dict(load_artifact(path, "posterior"))
        except DgpFcoError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaVersionError(f"Malformed posterior artifact {path}: {str(e)}")

    @staticmethod
    def load_basis(path: Path) -> Tuple[PCBasis, np.ndarray, List[str]]:
        try:
            return basis_from_dict(load_artifact(path, "basis"))
        except DgpFcoError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaVersionError(f"Malformed basis artifact {path}: {str(e)}")

    @staticmethod
    def load_emulator(path: Path) -> PCEmulator:
        try:
            return emulator_from_dict(load_artifact(path, "emulator"))
        except DgpFcoError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaVersionError(f"Malformed emulator artifact {path}: {str(e)}")
