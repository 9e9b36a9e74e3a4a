"""Command-line entry point for spectrum fusion, deep GP fitting and emulation."""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

import settings
from models import CommandResult, RunConfig, SpectraBatch
from services import (
    ArtifactService,
    DgpFcoService,
    EmulatorService,
    SimulationStudyService,
    SpectraFusionService,
)
from services.artifact_service import predictions_frame, read_curves_csv, read_params_csv
from utils import (
    ConfigurationError,
    DgpFcoError,
    GridMismatchError,
    collect_files,
)
from utils.gaussmath import log_score, mse

logger = logging.getLogger("dgpfco")


# ============================================================================
# Commands
# ============================================================================

def cmd_simulate(cfg: RunConfig) -> CommandResult:
    """
    Run the simulation study over the configured scenario grid.

    Args:
        cfg: Validated run configuration

    Returns:
        CommandResult; exit code 3 when any replicate failed
    """
    out = ArtifactService(cfg.output_path())
    service = SimulationStudyService(replace(cfg.dgp, seed=cfg.seed), jobs=cfg.jobs)
    frame = service.run(cfg.simulation, cfg.seed)
    path = out.save_table(frame, "simulation_results.csv")

    failed = frame[frame["error"] != ""] if not frame.empty else frame
    summary = {"results": str(path), "rows": int(len(frame))}
    if not failed.empty:
        return CommandResult(
            success=False,
            message=f"{len(failed)} method fits failed",
            data=summary,
            error="; ".join(failed["error"].tolist()),
            exit_code=3,
        )
    medians = frame.groupby(["scenario", "method"])["log_score"].median().round(4)
    summary["median_log_score"] = {f"{s}/{m}": float(v) for (s, m), v in medians.items()}
    return CommandResult(success=True, message=f"Scored {len(frame)} method fits", data=summary)


def _fit_one(fusion: SpectraFusionService, dgp: DgpFcoService, batch: SpectraBatch, precision) -> dict:
    try:
        ws = fusion.fuse(batch, precision)
        chain, post = dgp.fit(ws)
        return {"id": batch.cosmology_id, "chain": chain, "post": post, "error": None}
    except DgpFcoError as e:
        logger.error("%s failed: %s", batch.cosmology_id, str(e))
        return {"id": batch.cosmology_id, "chain": None, "post": None, "error": str(e)}


def cmd_fit(cfg: RunConfig) -> CommandResult:
    """
    Fuse every input batch and fit the deep GP to each cosmology.

    Writes posterior_<id>.json, summary_<id>.csv and fit_summary.csv.
    """
    out = ArtifactService(cfg.output_path())
    fusion = SpectraFusionService(
        ranges=cfg.validity_ranges(),
        convention=cfg.error_convention,
        r=cfg.low_runs,
        detrend=cfg.detrend,
        input_space=cfg.input_space,
    )
    dgp_cfg = replace(cfg.dgp, seed=cfg.seed)
    dgp = DgpFcoService(dgp_cfg)

    batches = fusion.load_batches(collect_files(cfg.inputs, ".csv"))
    if not batches:
        raise ConfigurationError("no input CSV files found")
    precision = fusion.fit_precisions(batches)

    if cfg.jobs == 1 or len(batches) == 1:
        outcomes = [_fit_one(fusion, dgp, b, precision) for b in batches]
    else:
        outcomes = Parallel(n_jobs=cfg.jobs)(delayed(_fit_one)(fusion, dgp, b, precision) for b in batches)

    rows = []
    for outcome in outcomes:
        post = outcome["post"]
        if post is not None:
            out.save_posterior(
                post, dgp_cfg, outcome["chain"],
                extra={"error_convention": cfg.error_convention.value, "mode": cfg.mode},
            )
        rows.append({
            "cosmology_id": outcome["id"],
            "status": "ok" if post is not None else "failed",
            "T": post.T if post is not None else 0,
            "theta_s_mean": float(np.mean(post.theta_s)) if post is not None else float("nan"),
            "theta_w_mean": float(np.mean(post.theta_w)) if post is not None else float("nan"),
            "error": outcome["error"] or "",
        })
    out.save_table(pd.DataFrame(rows), "fit_summary.csv")

    failed = [r for r in rows if r["status"] != "ok"]
    data = {
        "cosmologies": len(rows),
        "failed": [r["cosmology_id"] for r in failed],
        "convention": cfg.error_convention.value,
        "c": precision.c,
    }
    if failed:
        return CommandResult(
            success=False,
            message=f"{len(failed)} of {len(rows)} cosmologies failed",
            data=data,
            error="; ".join(f"{r['cosmology_id']}: {r['error']}" for r in failed),
            exit_code=3,
        )
    return CommandResult(success=True, message=f"Fitted {len(rows)} cosmologies", data=data)


def cmd_basis(cfg: RunConfig) -> CommandResult:
    """Build the PC basis over the posterior means of fitted cosmologies."""
    out = ArtifactService(cfg.output_path())
    paths = collect_files(cfg.inputs, ".json")
    if not paths:
        raise ConfigurationError("no posterior artifacts found")
    posteriors = [ArtifactService.load_posterior(p) for p in paths]
    basis = EmulatorService(p_eta=cfg.p_eta, seed=cfg.seed or 0).build_basis(posteriors)
    ids = [p.cosmology_id for p in posteriors]
    path = out.save_basis(basis, posteriors[0].k, ids)
    return CommandResult(
        success=True,
        message=f"Basis with {basis.p_eta} components over {basis.m} cosmologies",
        data={"basis": str(path), "p_eta": basis.p_eta, "cosmologies": ids},
    )


def cmd_emulate(cfg: RunConfig) -> CommandResult:
    """Fit one weight GP per component from a basis artifact and training parameters."""
    if len(cfg.inputs) != 1 or cfg.params_path is None:
        raise ConfigurationError("emulate needs one basis artifact and --params")
    out = ArtifactService(cfg.output_path())
    basis, k, ids = ArtifactService.load_basis(Path(cfg.inputs[0]))
    param_ids, psi = read_params_csv(Path(cfg.params_path))
    lookup = {cid: row for cid, row in zip(param_ids, psi)}
    missing = [cid for cid in ids if cid not in lookup]
    if missing:
        raise ConfigurationError(f"no parameters for cosmologies {missing}")
    training = np.vstack([lookup[cid] for cid in ids])

    emulator = EmulatorService(p_eta=basis.p_eta, seed=cfg.seed or 0, jobs=cfg.jobs).fit(basis, training, k, ids)
    path = out.save_emulator(emulator)
    return CommandResult(
        success=True,
        message=f"Emulator with {len(emulator.models)} weight GPs",
        data={"emulator": str(path), "beta": [m.params.beta.tolist() for m in emulator.models]},
    )


def cmd_predict(cfg: RunConfig) -> CommandResult:
    """Predict one curve per row of the parameter file."""
    if len(cfg.inputs) != 1 or cfg.params_path is None:
        raise ConfigurationError("predict needs one emulator artifact and --params")
    out = ArtifactService(cfg.output_path())
    emulator = ArtifactService.load_emulator(Path(cfg.inputs[0]))
    ids, psi = read_params_csv(Path(cfg.params_path))
    curves = EmulatorService().predict(emulator, psi)
    path = out.save_table(predictions_frame(ids, emulator.k, curves), "predictions.csv")
    return CommandResult(success=True, message=f"Predicted {len(ids)} curves", data={"predictions": str(path)})


def _load_references(paths: List[str]) -> Dict[str, dict]:
    references: Dict[str, dict] = {}
    found = set(collect_files(paths, ".json")) | set(collect_files(paths, ".csv"))
    for path in sorted(found, key=lambda p: p.name):
        if path.suffix.lower() == ".json":
            post = ArtifactService.load_posterior(path)
            references[post.cosmology_id] = {"k": post.k, "mean": post.mean, "post": post}
        else:
            for cid, (k, values) in read_curves_csv(path).items():
                references[cid] = {"k": k, "mean": values, "post": None}
    return references


def cmd_score(cfg: RunConfig) -> CommandResult:
    """
    Compare predicted curves with reference curves.

    Writes score_by_curve.csv (cosmology_id, mse[, log_score]) and
    score_by_k.csv (k, mse). Log scores are reported when the reference is a
    posterior artifact carrying its mixture covariance.

    Raises:
        GridMismatchError: If a prediction and its reference differ in wavenumbers
    """
    if not cfg.inputs or not cfg.reference:
        raise ConfigurationError("score needs prediction files and --reference")
    out = ArtifactService(cfg.output_path())
    predicted: Dict[str, tuple] = {}
    for path in collect_files(cfg.inputs, ".csv"):
        predicted.update(read_curves_csv(path))
    references = _load_references(cfg.reference)

    shared = [cid for cid in predicted if cid in references]
    if not shared:
        raise ConfigurationError("no predicted cosmology has a reference curve")

    rows, errors, k_ref = [], [], None
    for cid in shared:
        k, values = predicted[cid]
        ref = references[cid]
        if k.shape != ref["k"].shape or not np.allclose(k, ref["k"], rtol=1e-12, atol=0.0):
            raise GridMismatchError(f"{cid}: predicted and reference curves use different wavenumbers")
        if k_ref is None:
            k_ref = k
        elif k.shape != k_ref.shape or not np.allclose(k, k_ref, rtol=1e-12, atol=0.0):
            raise GridMismatchError("scored curves do not share one wavenumber grid")
        row = {"cosmology_id": cid, "mse": mse(values, ref["mean"])}
        post = ref["post"]
        if post is not None and post.mixture_cov is not None:
            row["log_score"] = log_score(values, post.predictive())
        rows.append(row)
        errors.append((values - ref["mean"]) ** 2)

    by_curve = pd.DataFrame(rows)
    by_k = pd.DataFrame({"k": k_ref, "mse": np.mean(errors, axis=0)})
    out.save_table(by_curve, "score_by_curve.csv")
    out.save_table(by_k, "score_by_k.csv")
    return CommandResult(
        success=True,
        message=f"Scored {len(rows)} curves",
        data={"mean_mse": float(by_curve["mse"].mean()), "curves": len(rows)},
    )


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "basis": cmd_basis,
    "emulate": cmd_emulate,
    "predict": cmd_predict,
    "score": cmd_score,
}


# ============================================================================
# Wiring
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgpfco", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        p = sub.add_parser(name, help=(func.__doc__ or "").strip().splitlines()[0])
        p.add_argument("inputs", nargs="*", help="Input files or directories")
        p.add_argument("--config", help="YAML run file")
        p.add_argument("--output", dest="output_dir", help="Output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, help="Worker count (-1 for all cores)")
        p.add_argument("--mode", choices=["mira-titan", "camb", "synthetic"])
        p.add_argument("--convention", choices=["diagonal", "literal", "propagated"])
        p.add_argument("--input-space", dest="input_space", choices=["raw", "emulation"])
        p.add_argument("--detrend", choices=["loess", "mean"])
        p.add_argument("--r", type=int, help="Number of low-resolution runs")
        p.add_argument("--iterations", dest="dgp_iterations", type=int)
        p.add_argument("--burn-in", dest="dgp_burn_in", type=int)
        p.add_argument("--thin", dest="dgp_thin", type=int)
        p.add_argument("--p-eta", dest="p_eta", type=int)
        p.add_argument("--params", dest="params_path", help="Parameter CSV (cosmology_id, psi_1..psi_p)")
        p.add_argument("--reference", action="append", help="Reference artifacts or curve CSVs")
        p.add_argument("--replicates", type=int)
        p.add_argument("--functions", nargs="+", choices=["f1", "f2"])
        p.add_argument("--variances", nargs="+", choices=["A", "B", "N"])
        p.add_argument("--r-values", dest="r_values", nargs="+", type=int)
        p.add_argument("--no-baseline", dest="no_baseline", action="store_true")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Merge the run file (if any) with command-line flags; flags win."""
    base = RunConfig.from_yaml(args.config, args.command) if args.config else RunConfig(command=args.command)
    sim_updates = {
        k: getattr(args, k) for k in ("replicates", "functions", "variances", "r_values") if getattr(args, k)
    }
    if args.no_baseline:
        sim_updates["baseline"] = False
    simulation = replace(base.simulation, **sim_updates) if sim_updates else None
    return base.with_overrides(
        inputs=args.inputs,
        output_dir=args.output_dir,
        seed=args.seed,
        jobs=args.jobs,
        mode=args.mode,
        convention=args.convention,
        input_space=args.input_space,
        detrend=args.detrend,
        r=args.r,
        dgp_iterations=args.dgp_iterations,
        dgp_burn_in=args.dgp_burn_in,
        dgp_thin=args.dgp_thin,
        p_eta=args.p_eta,
        params_path=args.params_path,
        reference=args.reference,
        simulation=simulation,
    )


def setup_logging(output_dir: Optional[Path]) -> None:
    """Stderr handler without timestamps plus a timestamped run.log next to the artifacts."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(settings.LOG_LEVEL)

    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(stream)
    if output_dir is not None:
        sidecar = logging.FileHandler(output_dir / settings.RUN_LOG_NAME, encoding="utf-8")
        sidecar.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(sidecar)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(None)
    try:
        cfg = load_config(args).validate()
        setup_logging(cfg.output_path())
        result = COMMANDS[cfg.command](cfg)
    except DgpFcoError as e:
        logger.error("%s: %s", type(e).__name__, str(e))
        return e.exit_code
    if result.success:
        logger.info(result.message)
    else:
        logger.error("%s: %s", result.message, result.error)
    print(result.message)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
