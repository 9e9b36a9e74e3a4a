"""Principal-component emulator: SVD basis over posterior means and one GP per weight."""
import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import cho_solve, svd
from scipy.optimize import minimize
from scipy.stats import qmc

import settings
from models import InputNormalizer, PCBasis, PCEmulator, PosteriorSpectrum, PowExpParams, WeightGp
from utils import (
    DgpFcoError,
    DimensionError,
    FitFailureError,
    GridMismatchError,
    InvalidParameterError,
    NumericalError,
    SingularMatrixError,
    as_vector,
    substream,
)
from utils.gaussmath import chol
from utils.kernelcov import powexp_matrix

logger = logging.getLogger(__name__)


def build_basis(curves: np.ndarray, p_eta: int = settings.DEFAULT_P_ETA) -> PCBasis:
    """
    PC basis of m curves of length n.

    The curves are centered by their mean and the n x m centered matrix is
    decomposed as U diag(s) V^T. B* = U diag(s) / sqrt(m) and
    Gamma* = sqrt(m) V; the first p_eta columns of each are kept.

    Args:
        curves: m x n matrix, one curve per row
        p_eta: Number of components to keep

    Returns:
        PCBasis; p_eta is lowered to the numerical rank (at least 1) with a warning
    """
    Y = np.atleast_2d(np.asarray(curves, dtype=float))
    m, n = Y.shape
    if m < 2:
        raise DimensionError(f"a basis needs at least two curves, got {m}")
    if p_eta < 1:
        raise InvalidParameterError(f"p_eta must be at least 1, got {p_eta}")

    mean = Y.mean(axis=0)
    eta = (Y - mean).T
    U, s, Vt = svd(eta, full_matrices=False)
    tol = s[0] * max(n, m) * np.finfo(float).eps if s.size and s[0] > 0 else 0.0
    rank = int(np.sum(s > tol)) if tol > 0 else 0
    if p_eta > rank:
        kept = max(rank, 1)
        logger.warning("Requested %d components but the curves have rank %d; keeping %d", p_eta, rank, kept)
        p_eta = kept

    root_m = math.sqrt(m)
    B = U[:, :p_eta] * (s[:p_eta] / root_m)
    Gamma = root_m * Vt[:p_eta].T
    logger.info("Basis: %d curves, rank %d, %d components kept", m, rank, p_eta)
    return PCBasis(mean=mean, B=B, Gamma=Gamma, singular_values=s, p_eta=p_eta)


def _weight_nll(beta: np.ndarray, psi: np.ndarray, gamma: np.ndarray, alpha: float, nugget: float) -> float:
    """Negative profile log-likelihood of the weights with the variance profiled out."""
    m = gamma.shape[0]
    corr = powexp_matrix(psi, psi, PowExpParams(beta, alpha))
    corr[np.diag_indices_from(corr)] += nugget
    factor, _ = chol(corr, role="weight correlation")
    solved = cho_solve((factor, True), gamma, check_finite=False)
    scale = max(float(gamma @ solved) / m, nugget)
    return 0.5 * (m * math.log(scale) + 2.0 * np.sum(np.log(np.diag(factor))))


def fit_weight_gp(
    psi: np.ndarray,
    gamma: np.ndarray,
    index: int = 0,
    alpha: float = settings.POWEXP_ALPHA,
    nugget: float = settings.WEIGHT_GP_NUGGET,
    rng: Optional[np.random.Generator] = None,
) -> WeightGp:
    """
    Maximum-likelihood power-exponential GP for one weight vector.

    Beta is optimized with L-BFGS-B from 5 * p Sobol starts over [-3, 3]^p;
    the variance is profiled as gamma^T R^-1 gamma / m, floored at the nugget.

    Args:
        psi: m x p inputs on the unit cube
        gamma: m training weights
        index: Component index
        alpha: Fixed exponent
        nugget: Diagonal added to the correlation matrix
        rng: Stream used to scramble the start design

    Returns:
        WeightGp with its cached factor

    Raises:
        FitFailureError: If every start fails
    """
    X = np.atleast_2d(np.asarray(psi, dtype=float))
    g = as_vector(gamma, "gamma")
    m, p = X.shape
    if g.shape[0] != m:
        raise DimensionError(f"{m} inputs but {g.shape[0]} weights")

    n_starts = settings.STARTS_PER_DIMENSION * p
    sobol = qmc.Sobol(d=p, scramble=True, seed=rng if rng is not None else substream(0, "weight-gp", index))
    design = sobol.random_base2(int(math.ceil(math.log2(n_starts))))[:n_starts]
    lo, hi = settings.BETA_START_RANGE
    starts = qmc.scale(design, [lo] * p, [hi] * p)

    def objective(beta: np.ndarray) -> float:
        try:
            return _weight_nll(beta, X, g, alpha, nugget)
        except SingularMatrixError:
            return 1e300

    best_value, best_beta = math.inf, None
    for start in starts:
        out = minimize(objective, x0=start, method="L-BFGS-B", bounds=[settings.BETA_BOUNDS] * p)
        logger.debug("Weight %d start %s -> nll %.4g", index, np.round(start, 3), out.fun)
        if np.isfinite(out.fun) and out.fun < min(best_value, 1e299):
            best_value, best_beta = float(out.fun), np.asarray(out.x, dtype=float)
    if best_beta is None:
        raise FitFailureError(f"weight GP {index} failed from every start", best_params=None)

    corr = powexp_matrix(X, X, PowExpParams(best_beta, alpha))
    corr[np.diag_indices_from(corr)] += nugget
    factor, _ = chol(corr, role="weight correlation")
    alpha_vec = cho_solve((factor, True), g, check_finite=False)
    scale = max(float(g @ alpha_vec) / m, nugget)
    return WeightGp(
        index=index,
        psi=X,
        gamma=g,
        params=PowExpParams(best_beta, alpha, scale, nugget),
        factor=factor,
        alpha_vec=alpha_vec,
        loglik=-best_value,
    )


def predict_weight(model: WeightGp, psi_star: np.ndarray) -> float:
    """Kriging mean r(psi*)^T R^-1 gamma for one normalized input."""
    point = np.atleast_2d(np.asarray(psi_star, dtype=float))
    r = powexp_matrix(point, model.psi, PowExpParams(model.params.beta, model.params.alpha))
    return float((r @ model.alpha_vec)[0])


def predict_spectrum(basis: PCBasis, models: Sequence[WeightGp], psi_star: np.ndarray) -> np.ndarray:
    """
    Emulated curve S_bar + sum_i gamma_i(psi*) B_i.

    Raises:
        DimensionError: If the number of weight GPs differs from the basis size
    """
    if len(models) != basis.p_eta:
        raise DimensionError(f"{len(models)} weight GPs for {basis.p_eta} components")
    weights = np.array([predict_weight(model, psi_star) for model in models])
    return basis.mean + basis.B @ weights


class EmulatorService:
    """Service for building and querying the PC emulator."""

    def __init__(
        self,
        p_eta: int = settings.DEFAULT_P_ETA,
        alpha: float = settings.POWEXP_ALPHA,
        nugget: float = settings.WEIGHT_GP_NUGGET,
        seed: int = 0,
        jobs: int = 1,
    ):
        """Initialize emulator settings."""
        self.p_eta = p_eta
        self.alpha = alpha
        self.nugget = nugget
        self.seed = seed
        self.jobs = jobs

    def build_basis(self, posteriors: List[PosteriorSpectrum]) -> PCBasis:
        """
        Basis over the posterior means of fitted cosmologies.

        Raises:
            GridMismatchError: If the posteriors are on different grids
        """
        if not posteriors:
            raise DimensionError("no posterior spectra supplied")
        k = posteriors[0].k
        for post in posteriors[1:]:
            if post.k.shape != k.shape or not np.array_equal(post.k, k):
                raise GridMismatchError(f"{post.cosmology_id} is on a different grid from {posteriors[0].cosmology_id}")
        return build_basis(np.vstack([p.mean for p in posteriors]), self.p_eta)

    def fit(self, basis: PCBasis, psi: np.ndarray, k: np.ndarray, cosmology_ids: List[str]) -> PCEmulator:
        """
        Fit one weight GP per component on normalized parameters.

        Args:
            basis: PC basis
            psi: m x p training parameters in the order of the basis rows
            k: Wavenumbers of the basis curves
            cosmology_ids: Training cosmology names

        Returns:
            PCEmulator
        """
        X = np.atleast_2d(np.asarray(psi, dtype=float))
        if X.shape[0] != basis.m:
            raise DimensionError(f"{X.shape[0]} parameter rows for {basis.m} training curves")
        normalizer = InputNormalizer.fit(X)
        unit = normalizer.transform(X)
        try:
            models = Parallel(n_jobs=self.jobs)(
                delayed(fit_weight_gp)(
                    unit, basis.Gamma[:, i], i, self.alpha, self.nugget, substream(self.seed, "weight-gp", i)
                )
                for i in range(basis.p_eta)
            )
        except DgpFcoError:
            raise
        except Exception as e:
            raise NumericalError(f"Failed to fit weight GPs: {str(e)}")
        logger.info("Fitted %d weight GPs on %d cosmologies", len(models), basis.m)
        return PCEmulator(
            basis=basis, models=list(models), normalizer=normalizer, k=np.asarray(k, dtype=float),
            cosmology_ids=list(cosmology_ids),
        )

    def predict(self, emulator: PCEmulator, psi_star: np.ndarray) -> np.ndarray:
        """Predicted curves, one row per parameter row."""
        unit = emulator.normalizer.transform(psi_star)
        return np.vstack([predict_spectrum(emulator.basis, emulator.models, row) for row in unit])
