"""Multi-fidelity fusion of simulator curves into a weighted spectrum and its error covariance."""
import logging
import re
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.special import digamma

import settings
from models import (
    ErrorConvention,
    Lambdas,
    MaternParams,
    PrecisionModel,
    SpectraBatch,
    ValidityRanges,
    WavenumberGrid,
    WeightedSpectrum,
)
from utils import (
    ConfigurationError,
    CoverageError,
    DgpFcoError,
    DimensionError,
    DomainError,
    FileAccessError,
    FitFailureError,
    GridMismatchError,
    InsufficientReplicatesError,
    MissingSourceError,
    NumericalError,
    SingularMatrixError,
    as_vector,
    write_atomic,
)
from utils.gaussmath import chol
from utils.kernelcov import matern52_matrix
from utils.smoothing import loess_smooth

logger = logging.getLogger(__name__)

_TWO_PI_SQ = 2.0 * np.pi ** 2
_LN10 = np.log(10.0)
_LOW_COLUMN = re.compile(r"^y_low_(\d+)$")


# ============================================================================
# Emulation space
# ============================================================================

def to_emulation_space(P: np.ndarray, grid: WavenumberGrid) -> np.ndarray:
    """
    Map raw power P(k) to log10(k^1.5 P(k) / (2 pi^2)).

    Raises:
        DomainError: If any P is not strictly positive
    """
    pv = as_vector(P, "P")
    if pv.shape[0] != grid.n:
        raise DimensionError(f"spectrum has length {pv.shape[0]}, grid has {grid.n}")
    if np.any(pv <= 0) or not np.all(np.isfinite(pv)):
        raise DomainError("power spectrum values must be positive and finite")
    return np.log10(grid.k ** 1.5 * pv / _TWO_PI_SQ)


def from_emulation_space(values: np.ndarray, grid: WavenumberGrid) -> np.ndarray:
    """Inverse of to_emulation_space."""
    v = as_vector(values, "values")
    if v.shape[0] != grid.n:
        raise DimensionError(f"spectrum has length {v.shape[0]}, grid has {grid.n}")
    return np.power(10.0, v) * _TWO_PI_SQ / grid.k ** 1.5


# ============================================================================
# Precision model
# ============================================================================

def _log10_chi2_bias(dof: float) -> float:
    """E[log10(chi2_dof / dof)]."""
    return float((digamma(dof / 2.0) + np.log(2.0 / dof)) / _LN10)


def fit_precisions(
    batches: List[SpectraBatch],
    window: Optional[np.ndarray] = None,
) -> PrecisionModel:
    """
    Estimate per-wavenumber precisions and the high-resolution multiplier.

    One pooled least-squares fit of log10(variance) on log10(k) with a
    high-resolution indicator. Low-resolution rows use the per-k sample
    variance of the runs; high-resolution rows use the squared deviation of
    the high-resolution curve from the low-resolution mean. Both responses are
    corrected for the mean of a log chi-square. With indicator coefficient d,
    10^d estimates 1/c + 1/r, so c = 1 / (10^d - 1/r).

    Args:
        batches: Batches on one shared grid
        window: Optional boolean mask of wavenumbers used in the fit

    Returns:
        PrecisionModel evaluated on the full grid

    Raises:
        InsufficientReplicatesError: If a batch has fewer than two low-resolution runs
        MissingSourceError: If no batch carries a high-resolution curve
    """
    if not batches:
        raise InsufficientReplicatesError("no batches supplied to the precision fit")
    grid = batches[0].grid
    mask = np.ones(grid.n, dtype=bool) if window is None else np.asarray(window, dtype=bool)
    if mask.shape[0] != grid.n or not np.any(mask):
        raise DimensionError("precision window must be a nonempty mask over the grid")
    x = grid.x[mask]

    responses, rows = [], []
    runs = []
    for batch in batches:
        if not batch.grid.matches(grid):
            raise GridMismatchError(f"batch {batch.cosmology_id} is on a different grid")
        if batch.r < 2:
            raise InsufficientReplicatesError(
                f"batch {batch.cosmology_id} has {batch.r} low-resolution runs, need at least 2"
            )
        runs.append(batch.r)
        low = batch.y_low[:, mask]
        s2 = np.var(low, axis=0, ddof=1)
        responses.append(np.log10(np.maximum(s2, np.finfo(float).tiny)) - _log10_chi2_bias(batch.r - 1))
        rows.append(np.column_stack([np.ones_like(x), x, np.zeros_like(x)]))
        if batch.y_high is not None:
            e2 = (batch.y_high[mask] - low.mean(axis=0)) ** 2
            responses.append(np.log10(np.maximum(e2, np.finfo(float).tiny)) - _log10_chi2_bias(1.0))
            rows.append(np.column_stack([np.ones_like(x), x, np.ones_like(x)]))

    design = np.vstack(rows)
    if not np.any(design[:, 2]):
        raise MissingSourceError("high-resolution curves are required to estimate the multiplier c")
    coef, *_ = np.linalg.lstsq(design, np.concatenate(responses), rcond=None)
    intercept, slope, offset = (float(v) for v in coef)

    mean_r = float(np.mean(runs))
    excess = 10.0 ** offset - 1.0 / mean_r
    if excess > 0:
        c = 1.0 / excess
    else:
        c = 10.0 ** (-offset)
        logger.warning("High-resolution residuals are no smaller than the low-resolution mean noise; using c = 10^-d")

    p = 1.0 / np.power(10.0, intercept + slope * grid.x)
    logger.info("Precision fit: slope %.4f, intercept %.4f, c %.4f", slope, intercept, c)
    return PrecisionModel(p=p, c=c, intercept=intercept, slope=slope, high_offset=offset)


# ============================================================================
# Precision matrices and weighted average
# ============================================================================

def build_lambdas(
    grid: WavenumberGrid,
    precision: PrecisionModel,
    ranges: ValidityRanges,
    r: int,
) -> Lambdas:
    """
    Diagonal precisions of the three data types.

    The anchor gets ``ranges.anchor_precision`` inside its window, the
    low-resolution mean r * p_i inside its window and the high-resolution curve
    c * p_i inside its window; zero elsewhere.

    Raises:
        CoverageError: If some wavenumber gets zero total precision
    """
    if precision.p.shape[0] != grid.n:
        raise DimensionError(f"precision has length {precision.p.shape[0]}, grid has {grid.n}")
    k = grid.k
    anchor = np.where(ranges.anchor.contains(k), ranges.anchor_precision, 0.0)
    low = np.where(ranges.low.contains(k), r * precision.p, 0.0)
    high = np.where(ranges.high.contains(k), precision.c * precision.p, 0.0)
    lambdas = Lambdas(anchor=anchor, low=low, high=high, anchor_source=ranges.anchor_source)

    uncovered = np.flatnonzero(lambdas.total <= 0)
    if uncovered.size:
        raise CoverageError(f"no data source covers k = {k[uncovered].tolist()}")
    return lambdas


def _sources(batch: SpectraBatch, lambdas: Lambdas) -> List[Tuple[str, Optional[np.ndarray], np.ndarray]]:
    anchor_name = "y_p" if lambdas.anchor_source == "perturbation" else "y_truth"
    return [
        (anchor_name, getattr(batch, anchor_name), lambdas.anchor),
        ("y_low", batch.y_low_mean, lambdas.low),
        ("y_high", batch.y_high, lambdas.high),
    ]


def weighted_average(batch: SpectraBatch, lambdas: Lambdas) -> np.ndarray:
    """
    Precision-weighted mean of the anchor, low-resolution mean and high-resolution curves.

    Raises:
        MissingSourceError: If a curve with nonzero weight is absent
        CoverageError: If some wavenumber has zero total precision
    """
    total = lambdas.total
    if np.any(total <= 0):
        raise CoverageError("weighted average needs positive total precision everywhere")
    acc = np.zeros(batch.grid.n)
    for name, curve, lam in _sources(batch, lambdas):
        if not np.any(lam > 0):
            continue
        if curve is None:
            raise MissingSourceError(f"{batch.cosmology_id}: {name} has nonzero weight but is missing")
        acc += np.where(lam > 0, lam * curve, 0.0)
    return acc / total


# ============================================================================
# Error covariance
# ============================================================================

def _profile_nll(log_theta: float, x: np.ndarray, residuals: np.ndarray) -> Tuple[float, float]:
    """Negative profile log-likelihood and the profiled scale for one lengthscale."""
    runs, m = residuals.shape
    corr = matern52_matrix(x, MaternParams(float(np.exp(log_theta)), 1.0, settings.DEFAULT_JITTER))
    factor, _ = chol(corr, role="error correlation")
    z = solve_triangular(factor, residuals.T, lower=True, check_finite=False)
    scale = float(np.sum(z * z)) / (runs * m)
    logdet = 2.0 * np.sum(np.log(np.diag(factor)))
    scale = max(scale, np.finfo(float).tiny)
    return 0.5 * (runs * m * np.log(scale) + runs * logdet), scale


def fit_error_matern(
    x: np.ndarray,
    residuals: np.ndarray,
    starts: int = settings.ERROR_COV_STARTS,
    bounds: Tuple[float, float] = settings.ERROR_COV_LOG_THETA_BOUNDS,
) -> MaternParams:
    """
    Profile maximum-likelihood Matern fit to replicate residual curves.

    The scale is profiled in closed form; log(theta) is optimized by L-BFGS-B
    from ``starts`` evenly spaced initial values.

    Args:
        x: Inputs of the residual curves
        residuals: r x m matrix, one zero-mean curve per row

    Returns:
        MaternParams with the fitted lengthscale and scale

    Raises:
        FitFailureError: If no start yields a finite likelihood
    """
    xv = as_vector(x, "x")
    res = np.atleast_2d(np.asarray(residuals, dtype=float))
    if res.shape[1] != xv.shape[0]:
        raise DimensionError(f"residuals have {res.shape[1]} columns, inputs have {xv.shape[0]}")

    def objective(v: np.ndarray) -> float:
        try:
            return _profile_nll(float(v[0]), xv, res)[0]
        except SingularMatrixError:
            return 1e300

    best_value, best_log_theta = np.inf, None
    for start in np.linspace(bounds[0], bounds[1], starts + 2)[1:-1]:
        out = minimize(objective, x0=[start], method="L-BFGS-B", bounds=[bounds])
        logger.debug("Error-covariance start %.3f -> %.3f (nll %.4g)", start, out.x[0], out.fun)
        if np.isfinite(out.fun) and out.fun < best_value and out.fun < 1e299:
            best_value, best_log_theta = float(out.fun), float(out.x[0])

    if best_log_theta is None:
        raise FitFailureError("Matern error-covariance fit failed from every start", best_params=None)
    _, scale = _profile_nll(best_log_theta, xv, res)
    return MaternParams(lengthscale=float(np.exp(best_log_theta)), scale=scale)


def _low_resolution_cov(
    batch: SpectraBatch,
    precision: PrecisionModel,
    lambdas: Lambdas,
    ybar: np.ndarray,
    detrend: str,
    span: float,
) -> Tuple[np.ndarray, Optional[MaternParams]]:
    """Covariance of the low-resolution mean, zero outside its window."""
    n = batch.grid.n
    window = lambdas.low > 0
    if not np.any(window):
        return np.zeros((n, n)), None
    if batch.r < 2:
        raise InsufficientReplicatesError(
            f"{batch.cosmology_id}: a dense error covariance needs at least 2 low-resolution runs"
        )
    x = batch.grid.x[window]
    p = precision.p[window]
    low = batch.y_low[:, window]
    if detrend == "loess":
        trend = loess_smooth(ybar[window], x, span)
        residuals = (low - trend) * np.sqrt(p)
    elif detrend == "mean":
        residuals = (low - low.mean(axis=0)) * np.sqrt(p) * np.sqrt(batch.r / (batch.r - 1.0))
    else:
        raise ConfigurationError(f"unknown detrending '{detrend}'")

    params = fit_error_matern(x, residuals)
    inv_sqrt_p = 1.0 / np.sqrt(p)
    run_cov = params.scale * matern52_matrix(x, MaternParams(params.lengthscale)) * np.outer(inv_sqrt_p, inv_sqrt_p)
    sigma_low = np.zeros((n, n))
    sigma_low[np.ix_(window, window)] = run_cov / batch.r
    return sigma_low, params


def _generalized_inverse(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    nz = values > 0
    out[nz] = 1.0 / values[nz]
    return out


def estimate_error_cov(
    batch: SpectraBatch,
    precision: PrecisionModel,
    lambdas: Lambdas,
    convention: ErrorConvention = ErrorConvention.LITERAL,
    detrend: str = "loess",
    span: float = settings.LOESS_SPAN,
) -> WeightedSpectrum:
    """
    Weighted average with its error covariance under one of three conventions.

    DIAGONAL: (sum of precisions)^-1 on the diagonal.
    LITERAL: (anchor^-1 + Sigma_low + high^-1)^-1 with 0 -> 0 diagonal inverses.
    PROPAGATED: Lambda^-1 (anchor + Lambda_low Sigma_low Lambda_low + high) Lambda^-1.
    Sigma_low is a Matern covariance fitted to the precision-scaled, detrended
    low-resolution runs and divided by the number of runs.

    Args:
        batch: Raw curves of one cosmology
        precision: Fitted precision model
        lambdas: Diagonal precisions from build_lambdas
        convention: Error covariance convention
        detrend: "loess" (smooth the weighted average) or "mean" (run average)
        span: LOESS span

    Returns:
        WeightedSpectrum whose covariance is symmetric and factorizable
    """
    convention = ErrorConvention(convention)
    ybar = weighted_average(batch, lambdas)
    total = lambdas.total
    n = batch.grid.n
    fitted: Optional[MaternParams] = None

    if convention is ErrorConvention.DIAGONAL:
        sigma = np.diag(1.0 / total)
    else:
        sigma_low, fitted = _low_resolution_cov(batch, precision, lambdas, ybar, detrend, span)
        if convention is ErrorConvention.LITERAL:
            inner = np.diag(_generalized_inverse(lambdas.anchor) + _generalized_inverse(lambdas.high)) + sigma_low
            factor, _ = chol(0.5 * (inner + inner.T), role="literal error precision")
            sigma = cho_solve((factor, True), np.eye(n), check_finite=False)
        else:
            inv_total = 1.0 / total
            middle = np.diag(lambdas.anchor + lambdas.high) + np.outer(lambdas.low, lambdas.low) * sigma_low
            sigma = middle * np.outer(inv_total, inv_total)

    sigma = 0.5 * (sigma + sigma.T)
    _, applied = chol(sigma, role="error covariance")
    if applied > 0:
        sigma = sigma + applied * np.eye(n)

    return WeightedSpectrum(
        ybar=ybar,
        lam=total,
        sigma_eps=sigma,
        convention=convention,
        grid=batch.grid,
        cosmology_id=batch.cosmology_id,
        error_scale=None if fitted is None else fitted.scale,
        error_lengthscale=None if fitted is None else fitted.lengthscale,
    )


# ============================================================================
# CSV ingestion
# ============================================================================

def read_batch_csv(path: Path, input_space: str = "raw") -> SpectraBatch:
    """
    Read one cosmology from CSV with columns k, y_p, y_low_1..y_low_r, y_high[, y_truth].

    Args:
        path: CSV file; its stem becomes the cosmology id
        input_space: "raw" for P(k) values, "emulation" for already transformed values
    """
    try:
        frame = pd.read_csv(path)
    except Exception as e:
        raise FileAccessError(f"Cannot read {path}: {str(e)}")
    if "k" not in frame.columns:
        raise FileAccessError(f"{path} has no 'k' column")
    low_columns = sorted(
        (c for c in frame.columns if _LOW_COLUMN.match(c)),
        key=lambda c: int(_LOW_COLUMN.match(c).group(1)),
    )
    try:
        grid = WavenumberGrid(k=frame["k"].to_numpy(dtype=float))
    except DgpFcoError as e:
        raise FileAccessError(f"{path}: {str(e)}")

    def _curve(values: np.ndarray) -> np.ndarray:
        return to_emulation_space(values, grid) if input_space == "raw" else as_vector(values)

    curves = {
        name: _curve(frame[name].to_numpy(dtype=float))
        for name in ("y_p", "y_high", "y_truth")
        if name in frame.columns
    }
    y_low = np.vstack([_curve(frame[c].to_numpy(dtype=float)) for c in low_columns]) if low_columns else None
    return SpectraBatch(grid=grid, y_low=y_low, cosmology_id=path.stem, **curves)


def write_batch_csv(batch: SpectraBatch, path: Path, input_space: str = "raw") -> None:
    """Write a batch in the layout read_batch_csv expects."""

    def _curve(values: np.ndarray) -> np.ndarray:
        return from_emulation_space(values, batch.grid) if input_space == "raw" else values

    columns = {"k": batch.grid.k}
    if batch.y_p is not None:
        columns["y_p"] = _curve(batch.y_p)
    for i in range(batch.r):
        columns[f"y_low_{i + 1}"] = _curve(batch.y_low[i])
    if batch.y_high is not None:
        columns["y_high"] = _curve(batch.y_high)
    if batch.y_truth is not None:
        columns["y_truth"] = _curve(batch.y_truth)
    write_atomic(path, pd.DataFrame(columns).to_csv(index=False, float_format=settings.CSV_FLOAT_FORMAT))


class SpectraFusionService:
    """Service for loading simulator batches and fusing them into weighted spectra."""

    def __init__(
        self,
        ranges: ValidityRanges,
        convention: ErrorConvention = ErrorConvention.LITERAL,
        r: Optional[int] = None,
        detrend: str = "loess",
        span: float = settings.LOESS_SPAN,
        input_space: str = "raw",
    ):
        """Initialize the fusion service."""
        self.ranges = ranges
        self.convention = ErrorConvention(convention)
        self.r = r
        self.detrend = detrend
        self.span = span
        self.input_space = input_space

    def load_batches(self, paths: Iterable[Path]) -> List[SpectraBatch]:
        """
        Read every CSV and check that all batches share one grid.

        Raises:
            GridMismatchError: If two files disagree on the wavenumbers
        """
        batches = [read_batch_csv(Path(p), self.input_space) for p in paths]
        for batch in batches[1:]:
            if not batch.grid.matches(batches[0].grid):
                raise GridMismatchError(
                    f"{batch.cosmology_id} and {batches[0].cosmology_id} use different wavenumber grids"
                )
        logger.info("Loaded %d batches on a %d-point grid", len(batches), batches[0].grid.n if batches else 0)
        return batches

    def fit_precisions(self, batches: List[SpectraBatch]) -> PrecisionModel:
        """Fit the precision model on the window where the low-resolution runs are trusted."""
        usable = [b for b in batches if b.r >= 2 and b.y_high is not None]
        if not usable:
            raise InsufficientReplicatesError("no batch has both replicate low-resolution runs and a high-resolution curve")
        window = self.ranges.low.contains(usable[0].grid.k)
        return fit_precisions(usable, window=window)

    def fuse(self, batch: SpectraBatch, precision: PrecisionModel) -> WeightedSpectrum:
        """
        Build the weighted spectrum and error covariance of one cosmology.

        Args:
            batch: Raw curves
            precision: Shared precision model

        Returns:
            WeightedSpectrum
        """
        try:
            r = self.r if self.r is not None else batch.r
            lambdas = build_lambdas(batch.grid, precision, self.ranges, r)
            ws = estimate_error_cov(batch, precision, lambdas, self.convention, self.detrend, self.span)
        except DgpFcoError:
            raise
        except Exception as e:
            raise NumericalError(f"Failed to fuse {batch.cosmology_id}: {str(e)}")
        logger.info("Fused %s with the %s convention", batch.cosmology_id, self.convention.value)
        return ws


# ============================================================================
# Synthetic cosmologies
# ============================================================================

def synthetic_truth(x: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Smooth emulation-space curve controlled by a short parameter vector (values near [0, 1])."""
    xv = as_vector(x, "x")
    pv = np.resize(as_vector(psi, "psi"), 3)
    tilt = 0.8 + 0.4 * pv[1]
    knee = -0.6 + 0.5 * pv[2]
    return 0.2 + 0.5 * pv[0] + tilt * np.tanh(1.5 * (xv - knee)) + 0.1 * np.sin(2.0 * xv)


def synthetic_batch(
    grid: WavenumberGrid,
    rng: np.random.Generator,
    psi: Optional[np.ndarray] = None,
    r: int = settings.MIRA_TITAN_LOW_RUNS,
    c: float = 3.73,
    noise_sd: float = 0.02,
    lengthscale: float = 0.05,
    cosmology_id: str = "synthetic",
) -> SpectraBatch:
    """
    Mira-style batch around synthetic_truth.

    The perturbation curve drifts away above k = 0.04, the low-resolution runs
    lose power above k = 0.25 and carry correlated noise with variance
    proportional to k^-2 (sd ``noise_sd`` at k = 0.1), and the high-resolution
    run carries the same noise with variance divided by ``c``.
    """
    truth = synthetic_truth(grid.x, np.zeros(3) if psi is None else psi)
    sd = noise_sd * (grid.k / 0.1) ** -1.0
    corr = matern52_matrix(grid.x, MaternParams(lengthscale, 1.0, settings.DEFAULT_JITTER))
    factor, _ = chol(corr, role="synthetic noise correlation")

    def _noise(count: int) -> np.ndarray:
        return (rng.standard_normal((count, grid.n)) @ factor.T) * sd

    y_p = truth + 0.3 * np.maximum(grid.x - np.log10(0.04), 0.0) ** 2
    low_bias = -0.4 * np.maximum(grid.x - np.log10(0.25), 0.0) ** 2
    y_low = truth + low_bias + _noise(r)
    y_high = truth + _noise(1)[0] / np.sqrt(c)
    return SpectraBatch(
        grid=grid, y_low=y_low, y_p=y_p, y_high=y_high, y_truth=truth, cosmology_id=cosmology_id
    )
