"""Synthetic functional-realization study scoring the deep GP against a homoskedastic GP."""
import itertools
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

import settings
from models import (
    DgpConfig,
    ErrorConvention,
    GaussianDist,
    Lambdas,
    MaternParams,
    PrecisionModel,
    SimParams,
    SimResult,
    SimScenario,
    SimulationSpec,
    SpectraBatch,
    WavenumberGrid,
)
from utils import DgpFcoError, DimensionError, FitFailureError, SingularMatrixError, as_vector, substream
from utils.gaussmath import chol, mvn_sample, score
from utils.kernelcov import matern52_cross, matern52_matrix

from .dgp_service import fit as fit_dgp, posterior_spectrum
from .spectra_fusion_service import estimate_error_cov

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)

# log bounds of (signal variance, lengthscale on unit inputs, noise variance)
_BASELINE_BOUNDS = [(math.log(1e-6), math.log(1e3)), (math.log(1e-4), math.log(10.0)), (math.log(1e-12), math.log(10.0))]
_BASELINE_STARTS = [(0.0, math.log(0.05), math.log(1e-2)), (math.log(0.1), math.log(0.5), math.log(1e-4)), (0.0, math.log(0.01), math.log(1e-6))]


def eval_f1(x: np.ndarray, m1: float, u1: float) -> np.ndarray:
    """Damped oscillation with a linear drift."""
    x = np.asarray(x, dtype=float)
    return m1 * np.exp(-u1 * x / 2.0) * np.cos(x * np.sqrt(25.0 - (u1 / 2.0) ** 2)) - m1 * x / 5.0


def eval_f2(x: np.ndarray, m2: float, u2: float) -> np.ndarray:
    """Two Gaussian bumps with a small sine ripple."""
    x = np.asarray(x, dtype=float)
    return np.exp(-m2 * (x - 3.0) ** 2) + np.exp(-u2 * (x - 1.0) ** 2) - 0.05 * np.sin(8.0 * (x - 1.9))


def draw_sim_params(rng: np.random.Generator) -> SimParams:
    """m1 ~ U(0.5, 1.5), u1 ~ U(1.5, 2.5), m2, u2 ~ U(0.6, 1.4)."""
    m1 = rng.uniform(0.5, 1.5)
    u1 = rng.uniform(1.5, 2.5)
    m2 = rng.uniform(0.6, 1.4)
    u2 = rng.uniform(0.6, 1.4)
    return SimParams(m1=float(m1), u1=float(u1), m2=float(m2), u2=float(u2))


def sim_grid() -> WavenumberGrid:
    start, stop, count = settings.SIM_GRID
    return WavenumberGrid.from_x(np.linspace(start, stop, int(count)))


def build_sigma_A(x: np.ndarray) -> np.ndarray:
    scale, theta = settings.SIM_SIGMA_A
    return matern52_matrix(x, MaternParams(theta, scale, settings.SIM_JITTER))


def build_sigma_B(x: np.ndarray) -> np.ndarray:
    """diag(s) M diag(s) plus jitter, with M = 0.1 K(d, 0.05) and s = 1.5^(-x/2)."""
    scale, theta, base = settings.SIM_SIGMA_B
    xv = as_vector(x, "x")
    s = base ** (-xv / 2.0)
    cov = matern52_matrix(xv, MaternParams(theta, scale)) * np.outer(s, s)
    cov[np.diag_indices_from(cov)] += settings.SIM_JITTER
    return cov


def _scenario_cov(variance_id: str, x: np.ndarray) -> np.ndarray:
    if variance_id == "A":
        return build_sigma_A(x)
    if variance_id == "B":
        return build_sigma_B(x)
    return settings.SIM_JITTER * np.eye(x.shape[0])


def _truth(scenario: SimScenario, params: SimParams, x: np.ndarray) -> np.ndarray:
    if scenario.function_id == "f1":
        return eval_f1(x, params.m1, params.u1)
    return eval_f2(x, params.m2, params.u2)


# ============================================================================
# Homoskedastic baseline
# ============================================================================

def _baseline_terms(log_params: np.ndarray, x_unit: np.ndarray, r: int):
    signal, theta, noise = np.exp(log_params)
    cov = matern52_matrix(x_unit, MaternParams(theta, signal))
    cov[np.diag_indices_from(cov)] += noise / r
    factor, _ = chol(cov, role="baseline covariance")
    return signal, theta, noise, factor


def _baseline_nll(log_params: np.ndarray, x_unit: np.ndarray, ybar: np.ndarray, ss_within: float, r: int) -> float:
    """Exact negative log-likelihood of r replicate curves with iid noise, via their mean."""
    _, _, noise, factor = _baseline_terms(log_params, x_unit, r)
    n = ybar.shape[0]
    alpha = solve_triangular(factor, ybar, lower=True, check_finite=False)
    mean_term = 0.5 * (alpha @ alpha) + np.sum(np.log(np.diag(factor))) + 0.5 * n * _LOG_2PI
    contrasts = (r - 1) * n
    within = 0.5 * contrasts * (_LOG_2PI + math.log(noise)) + 0.5 * ss_within / noise
    return float(mean_term + within + 0.5 * n * math.log(r))


def baseline_gp_fit(y: np.ndarray, grid: WavenumberGrid) -> GaussianDist:
    """
    Stationary Matern-5/2 GP with iid noise, fitted by maximum likelihood.

    A matrix input holds r replicate curves, treated as r * n independent noisy
    points; the likelihood is evaluated exactly through the replicate mean and
    the within-replicate sum of squares. The mean is the sample average of all
    points.

    Args:
        y: n-vector or r x n matrix on the grid
        grid: Input grid

    Returns:
        Posterior of the latent curve on the grid

    Raises:
        FitFailureError: If no start yields a finite likelihood
    """
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if Y.shape[1] != grid.n:
        raise DimensionError(f"curves have {Y.shape[1]} points, grid has {grid.n}")
    r = Y.shape[0]
    center = float(Y.mean())
    ybar = Y.mean(axis=0) - center
    ss_within = float(np.sum((Y - Y.mean(axis=0)) ** 2))
    x_unit = (grid.x - grid.x[0]) / (grid.x[-1] - grid.x[0])

    def objective(v: np.ndarray) -> float:
        try:
            return _baseline_nll(v, x_unit, ybar, ss_within, r)
        except SingularMatrixError:
            return 1e300

    best_value, best = math.inf, None
    for start in _BASELINE_STARTS:
        out = minimize(objective, x0=np.array(start), method="L-BFGS-B", bounds=_BASELINE_BOUNDS)
        logger.debug("Baseline start %s -> nll %.4g", np.round(start, 2), out.fun)
        if np.isfinite(out.fun) and out.fun < min(best_value, 1e299):
            best_value, best = float(out.fun), out.x
    if best is None:
        raise FitFailureError("baseline GP fit failed from every start", best_params=None)

    signal, theta, noise, factor = _baseline_terms(best, x_unit, r)
    prior = matern52_cross(x_unit, x_unit, MaternParams(theta, signal))
    gain = cho_solve((factor, True), prior, check_finite=False).T
    mean = center + gain @ ybar
    cov = prior - gain @ prior
    cov = 0.5 * (cov + cov.T)
    np.fill_diagonal(cov, np.maximum(np.diag(cov), 0.0))
    logger.debug("Baseline fit: signal %.3g, lengthscale %.3g, noise %.3g", signal, theta, noise)
    return GaussianDist(mean=mean, cov=cov, role="baseline posterior covariance")


# ============================================================================
# Replicates
# ============================================================================

def simulate_realizations(
    scenario: SimScenario, replicate: int
) -> Tuple[WavenumberGrid, SimParams, np.ndarray, np.ndarray]:
    """Draw parameters, the truth and r realizations of one replicate."""
    rng = substream(scenario.seed, scenario.label, replicate)
    grid = sim_grid()
    params = draw_sim_params(rng)
    truth = _truth(scenario, params, grid.x)
    dist = GaussianDist(mean=truth, cov=_scenario_cov(scenario.variance_id, grid.x), role="simulation covariance")
    return grid, params, truth, mvn_sample(dist, rng, scenario.r)


def run_replicate(
    scenario: SimScenario,
    replicate: int,
    cfg: Optional[DgpConfig] = None,
    baseline: bool = True,
) -> SimResult:
    """
    Generate one replicate, fit every method and score it against the truth.

    The fused observation is the equal-weight mean of the realizations and
    its error covariance follows the propagated convention with unit
    precisions and mean detrending. Method failures are recorded on the
    result rather than raised.
    """
    cfg = cfg or DgpConfig(seed=scenario.seed)
    grid, params, truth, Y = simulate_realizations(scenario, replicate)
    result = SimResult(scenario=scenario, replicate=replicate, params=params)
    name = f"{scenario.label}-rep{replicate}"

    try:
        batch = SpectraBatch(grid=grid, y_low=Y, cosmology_id=name)
        zeros = np.zeros(grid.n)
        lambdas = Lambdas(anchor=zeros, low=np.full(grid.n, float(scenario.r)), high=zeros)
        ws = estimate_error_cov(
            batch, PrecisionModel.unit(grid.n), lambdas, ErrorConvention.PROPAGATED, detrend="mean"
        )
        chain = fit_dgp(ws, cfg, substream(scenario.seed, scenario.label, replicate, "dgp"))
        post = posterior_spectrum(
            chain, ws, cfg, rng=substream(scenario.seed, scenario.label, replicate, "posterior")
        )
        result.scores["dgpfco"] = score(truth, post.predictive(), "dgpfco")
    except DgpFcoError as e:
        logger.error("%s: deep GP failed: %s", name, str(e))
        result.errors["dgpfco"] = f"{name}: {str(e)}"

    if baseline:
        try:
            result.scores["baseline"] = score(truth, baseline_gp_fit(Y, grid), "baseline")
        except DgpFcoError as e:
            logger.error("%s: baseline failed: %s", name, str(e))
            result.errors["baseline"] = f"{name}: {str(e)}"

    logger.info("Scored %s", name)
    return result


class SimulationStudyService:
    """Service for running the scenario grid of the simulation study."""

    def __init__(self, cfg: DgpConfig, jobs: int = 1):
        """Initialize with the sampler configuration shared by every replicate."""
        self.cfg = cfg
        self.jobs = jobs

    def scenarios(self, spec: SimulationSpec, seed: int) -> List[SimScenario]:
        return [
            SimScenario(function_id=f, variance_id=v, r=r, replicates=spec.replicates, seed=seed)
            for f, v, r in itertools.product(spec.functions, spec.variances, spec.r_values)
        ]

    def run(self, spec: SimulationSpec, seed: int) -> pd.DataFrame:
        """
        Run every (scenario, replicate) pair and collect tidy score rows.

        Args:
            spec: Scenario grid
            seed: Root seed

        Returns:
            DataFrame with one row per (scenario, rep, method)
        """
        tasks = [(sc, rep) for sc in self.scenarios(spec, seed) for rep in range(sc.replicates)]
        logger.info("Running %d replicates on %d workers", len(tasks), self.jobs)
        results = Parallel(n_jobs=self.jobs)(
            delayed(run_replicate)(sc, rep, self.cfg, spec.baseline) for sc, rep in tasks
        )
        rows = [row for result in results for row in result.rows()]
        frame = pd.DataFrame(rows)
        if frame.empty:
            return frame
        return frame.sort_values(["scenario", "rep", "method"], kind="mergesort").reset_index(drop=True)
