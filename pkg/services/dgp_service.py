"""Bayesian hierarchical deep GP: monotone warp, Gibbs sampler and latent-spectrum posterior."""
import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import cho_solve
from scipy.special import gammaln

import settings
from models import (
    DgpConfig,
    GaussianDist,
    MaternParams,
    PosteriorSpectrum,
    WarpChain,
    WarpSample,
    WeightedSpectrum,
)
from utils import (
    DgpFcoError,
    DimensionError,
    NumericalError,
    SamplerError,
    SingularMatrixError,
    as_vector,
    substream,
)
from utils.gaussmath import chol, mvn_logpdf, mvn_sample
from utils.kernelcov import matern52_matrix

logger = logging.getLogger(__name__)

_TWO_PI = 2.0 * math.pi
_LOG_SQRT_2PI = 0.5 * math.log(_TWO_PI)


def _unit(x: np.ndarray) -> np.ndarray:
    return (x - x[0]) / (x[-1] - x[0])


def monotone_warp(z: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    Nondecreasing warp of x driven by a latent draw z.

    Rates softplus(z) are integrated over x with the trapezoid rule and the
    result is rescaled so that W[0] = x[0] and W[-1] = x[-1]. A constant z
    gives the identity warp.

    Args:
        z: Latent values, one per input
        x: Strictly increasing inputs

    Returns:
        Warped inputs W
    """
    zv = as_vector(z, "z")
    xv = as_vector(x, "x")
    if zv.shape != xv.shape:
        raise DimensionError(f"latent draw has length {zv.shape[0]}, inputs have {xv.shape[0]}")
    rate = np.logaddexp(0.0, zv)
    area = cumulative_trapezoid(rate, xv, initial=0.0)
    if not area[-1] > 0:
        return xv.copy()
    W = xv[0] + (xv[-1] - xv[0]) * (area / area[-1])
    W = np.maximum.accumulate(W)
    W[0], W[-1] = xv[0], xv[-1]
    return W


def integrated_loglik(
    ybar: np.ndarray,
    W: np.ndarray,
    theta_s: float,
    sigma_eps: np.ndarray,
    mu_s: Optional[np.ndarray] = None,
    scale: float = 1.0,
) -> float:
    """
    Log density of ybar with the latent spectrum integrated out.

    ybar | W ~ N(mu_S, scale * K(W, theta_S) + Sigma_eps). A zero scale drops
    the latent term.

    Raises:
        SingularMatrixError: If the marginal covariance cannot be factorized
    """
    sigma_s = matern52_matrix(W, MaternParams(theta_s, scale)) if scale > 0 else None
    return marginal_loglik(ybar, sigma_s, sigma_eps, mu_s)


def marginal_loglik(
    ybar: np.ndarray,
    sigma_s: Optional[np.ndarray],
    sigma_eps: np.ndarray,
    mu_s: Optional[np.ndarray] = None,
) -> float:
    """Log N(ybar; mu_S, Sigma_S + Sigma_eps) for any latent covariance; None drops the latent term."""
    y = as_vector(ybar, "ybar")
    mean = np.zeros_like(y) if mu_s is None else as_vector(mu_s, "mu_s")
    cov = np.array(sigma_eps, dtype=float, copy=True)
    if sigma_s is not None:
        cov = cov + sigma_s
    return mvn_logpdf(y, GaussianDist(mean=mean, cov=cov, role="marginal covariance of ybar"))


def ess_update(
    z: np.ndarray,
    prior_factor: np.ndarray,
    loglik: Callable[[np.ndarray], float],
    rng: np.random.Generator,
    prior_mean: Optional[np.ndarray] = None,
    current_loglik: Optional[float] = None,
    max_shrinks: int = settings.ESS_MAX_SHRINKS,
) -> Tuple[np.ndarray, float, int]:
    """
    One elliptical slice sampling transition.

    Args:
        z: Current state
        prior_factor: Lower factor of the prior covariance
        loglik: Log-likelihood of a state; may raise SingularMatrixError
        rng: Random stream
        prior_mean: Prior mean of z (zero by default)
        current_loglik: Cached log-likelihood of z
        max_shrinks: Bracket shrinks before the chain stays put

    Returns:
        (new state, its log-likelihood, number of shrinks)
    """
    mean = np.zeros_like(z) if prior_mean is None else prior_mean
    current = loglik(z) if current_loglik is None else current_loglik
    nu = prior_factor @ rng.standard_normal(z.shape[0])
    threshold = current + math.log(rng.uniform())

    phi = rng.uniform(0.0, _TWO_PI)
    lo, hi = phi - _TWO_PI, phi
    offset = z - mean
    for shrinks in range(max_shrinks + 1):
        proposal = mean + offset * math.cos(phi) + nu * math.sin(phi)
        try:
            value = loglik(proposal)
        except SingularMatrixError:
            value = -math.inf
        if value > threshold:
            return proposal, value, shrinks
        if phi < 0:
            lo = phi
        else:
            hi = phi
        phi = rng.uniform(lo, hi)
    logger.warning("Elliptical slice bracket did not close after %d shrinks; keeping the current state", max_shrinks)
    return z, current, max_shrinks


def gamma_logpdf(theta: float, prior: Tuple[float, float]) -> float:
    """Gamma(shape, rate) log density."""
    shape, rate = prior
    if theta <= 0:
        return -math.inf
    return shape * math.log(rate) - float(gammaln(shape)) + (shape - 1.0) * math.log(theta) - rate * theta


def lognormal_proposal_logpdf(theta_new: float, theta_old: float, scale: float) -> float:
    """Log density of theta_new = theta_old * exp(scale * N(0, 1))."""
    step = math.log(theta_new) - math.log(theta_old)
    return -math.log(theta_new) - math.log(scale) - _LOG_SQRT_2PI - 0.5 * (step / scale) ** 2


def mh_log_accept_ratio(
    theta: float,
    theta_star: float,
    loglik_theta: float,
    loglik_star: float,
    prior: Tuple[float, float],
) -> float:
    """Log acceptance ratio of a log-normal random-walk move, including the log(theta*/theta) correction."""
    return (
        (loglik_star - loglik_theta)
        + (gamma_logpdf(theta_star, prior) - gamma_logpdf(theta, prior))
        + math.log(theta_star)
        - math.log(theta)
    )


def mh_update_theta(
    theta: float,
    prior: Tuple[float, float],
    proposal_scale: float,
    loglik: Callable[[float], float],
    rng: np.random.Generator,
    current_loglik: Optional[float] = None,
) -> Tuple[float, float, bool]:
    """
    One Metropolis-Hastings step for a positive lengthscale.

    Returns:
        (new theta, its log-likelihood, whether the proposal was accepted)
    """
    current = loglik(theta) if current_loglik is None else current_loglik
    theta_star = theta * math.exp(proposal_scale * rng.standard_normal())
    log_u = math.log(rng.uniform())
    if theta_star == theta:
        return theta, current, False
    try:
        value = loglik(theta_star)
    except SingularMatrixError:
        return theta, current, False
    if log_u < mh_log_accept_ratio(theta, theta_star, current, value, prior):
        return theta_star, value, True
    return theta, current, False


def conditional_moments(
    ybar: np.ndarray,
    W: np.ndarray,
    theta_s: float,
    sigma_eps: np.ndarray,
    mu_s: Optional[np.ndarray] = None,
    scale: float = 1.0,
    jitter: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean and covariance of S given ybar and one warp.

    m = mu + Sigma_S (Sigma_S + Sigma_eps)^-1 (ybar - mu),
    C = Sigma_S - Sigma_S (Sigma_S + Sigma_eps)^-1 Sigma_S,
    which equal (Sigma_S^-1 + Sigma_eps^-1)^-1 (Sigma_eps^-1 ybar + Sigma_S^-1 mu)
    and (Sigma_S^-1 + Sigma_eps^-1)^-1 without inverting either covariance.
    """
    sigma_s = matern52_matrix(W, MaternParams(theta_s, scale, jitter))
    return posterior_moments(ybar, sigma_s, sigma_eps, mu_s)


def posterior_moments(
    ybar: np.ndarray,
    sigma_s: np.ndarray,
    sigma_eps: np.ndarray,
    mu_s: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Conditional moments of S ~ N(mu_S, Sigma_S) given ybar = S + eps, eps ~ N(0, Sigma_eps)."""
    y = as_vector(ybar, "ybar")
    mean = np.zeros_like(y) if mu_s is None else as_vector(mu_s, "mu_s")
    factor, _ = chol(sigma_s + sigma_eps, role="latent plus error covariance")
    gain = cho_solve((factor, True), sigma_s, check_finite=False).T
    m = mean + gain @ (y - mean)
    C = sigma_s - gain @ sigma_s
    return m, 0.5 * (C + C.T)


def fit(ws: WeightedSpectrum, cfg: DgpConfig, rng: Optional[np.random.Generator] = None) -> WarpChain:
    """
    Run the Gibbs sampler over the latent warp and both lengthscales.

    Each iteration updates z by elliptical slice sampling, theta_W by MH on
    log N(z; mu_W, Sigma_W(theta_W)), then theta_S by MH on the integrated
    likelihood. Inputs are scaled to [0, 1] for the kernels; stored warps are
    in the units of the grid.

    Args:
        ws: Fused observation
        cfg: Sampler configuration
        rng: Random stream; derived from (cfg.seed, cosmology id) when omitted

    Returns:
        WarpChain of retained samples

    Raises:
        SamplerError: If the starting state cannot be evaluated
    """
    x = ws.grid.x
    n = x.shape[0]
    x_unit = _unit(x)
    if rng is None:
        rng = substream(cfg.seed or 0, ws.cosmology_id)
    mu_w = np.zeros(n) if cfg.mu_w is None else cfg.mu_w
    mu_s = np.zeros(n) if cfg.mu_s is None else cfg.mu_s
    if mu_w.shape[0] != n or mu_s.shape[0] != n:
        raise DimensionError(f"prior means must have length {n}")

    def loglik_s(z_value: np.ndarray, theta_value: float) -> float:
        return integrated_loglik(ws.ybar, monotone_warp(z_value, x_unit), theta_value, ws.sigma_eps, mu_s)

    def warp_prior(theta_value: float) -> GaussianDist:
        return GaussianDist(
            mean=mu_w,
            cov=matern52_matrix(x_unit, MaternParams(theta_value)),
            jitter=cfg.jitter,
            role="warp prior covariance",
        )

    theta_w = cfg.theta_w_prior[0] / cfg.theta_w_prior[1]
    theta_s = cfg.theta_s_prior[0] / cfg.theta_s_prior[1]
    z = mu_w.copy()
    try:
        prior = warp_prior(theta_w)
        ll_s = loglik_s(z, theta_s)
        ll_w = mvn_logpdf(z, prior)
    except SingularMatrixError as e:
        raise SamplerError(f"cannot evaluate the starting state: {str(e)}", iteration=0)

    samples: List[WarpSample] = []
    accepted_w = accepted_s = 0
    for it in range(cfg.iterations):
        z, ll_s, _ = ess_update(z, prior.factor, lambda v: loglik_s(v, theta_s), rng, mu_w, ll_s)
        ll_w = mvn_logpdf(z, prior)

        theta_w, ll_w, moved = mh_update_theta(
            theta_w, cfg.theta_w_prior, cfg.proposal_scale,
            lambda t: mvn_logpdf(z, warp_prior(t)), rng, ll_w,
        )
        if moved:
            accepted_w += 1
            prior = warp_prior(theta_w)

        theta_s, ll_s, moved = mh_update_theta(
            theta_s, cfg.theta_s_prior, cfg.proposal_scale,
            lambda t: loglik_s(z, t), rng, ll_s,
        )
        accepted_s += int(moved)

        if not np.isfinite(ll_s):
            raise SamplerError("log-likelihood became non-finite", iteration=it)
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            samples.append(WarpSample(
                z=z.copy(),
                W=monotone_warp(z, x),
                theta_s=theta_s,
                theta_w=theta_w,
                loglik=ll_s,
            ))

    chain = WarpChain(
        samples=samples,
        x=x.copy(),
        theta_w_acceptance=accepted_w / cfg.iterations,
        theta_s_acceptance=accepted_s / cfg.iterations,
        cosmology_id=ws.cosmology_id,
    )
    logger.info(
        "%s: %d samples retained, acceptance theta_W %.2f theta_S %.2f",
        ws.cosmology_id, len(chain), chain.theta_w_acceptance, chain.theta_s_acceptance,
    )
    return chain


def posterior_spectrum(
    chain: WarpChain,
    ws: WeightedSpectrum,
    cfg: DgpConfig,
    draws_per_sample: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> PosteriorSpectrum:
    """
    Pool the conditional posteriors of S over the retained warps.

    For every sample the closed-form (m, C) is computed and
    ``draws_per_sample`` curves are drawn from N(m, C). The pooled mean is the
    average draw and the bands are the 2.5 and 97.5 percentiles across draws.
    The mixture moments (mean of m, mean of C plus covariance of m) are kept
    as the Gaussian predictive used for log scores.

    Raises:
        SamplerError: If the chain is empty or more than 1% of samples fail to factorize
    """
    if len(chain) == 0:
        raise SamplerError("posterior requested from an empty chain")
    draws_each = draws_per_sample or cfg.draws_per_sample
    if rng is None:
        rng = substream(cfg.seed or 0, ws.cosmology_id, "posterior")
    x_unit = _unit(ws.grid.x)
    allowed = int(math.floor(settings.MAX_SKIPPED_FRACTION * len(chain)))

    draws, means, covs = [], [], []
    skipped = 0
    for t, sample in enumerate(chain.samples):
        try:
            m, C = conditional_moments(ws.ybar, monotone_warp(sample.z, x_unit), sample.theta_s, ws.sigma_eps, cfg.mu_s)
            draws.append(mvn_sample(GaussianDist(mean=m, cov=C, role="conditional covariance of S"), rng, draws_each))
        except SingularMatrixError as e:
            skipped += 1
            logger.warning("%s: skipping sample %d: %s", ws.cosmology_id, t, str(e))
            if skipped > allowed:
                raise SamplerError(f"{skipped} of {len(chain)} posterior samples failed to factorize", iteration=t)
            continue
        means.append(m)
        covs.append(C)

    stacked = np.vstack(draws)
    if stacked.shape[0] < settings.MIN_BAND_DRAWS:
        logger.warning("%s: credible bands rest on only %d draws", ws.cosmology_id, stacked.shape[0])
    mean = stacked.mean(axis=0)
    lower, upper = np.percentile(stacked, [2.5, 97.5], axis=0)
    ms = np.vstack(means)
    spread = np.cov(ms, rowvar=False, bias=True) if ms.shape[0] > 1 else np.zeros((ms.shape[1], ms.shape[1]))
    mixture_cov = np.mean(covs, axis=0) + np.atleast_2d(spread)

    return PosteriorSpectrum(
        T=len(chain) - skipped,
        mean=mean,
        lower=np.minimum(lower, mean),
        upper=np.maximum(upper, mean),
        k=ws.grid.k,
        mixture_mean=ms.mean(axis=0),
        mixture_cov=0.5 * (mixture_cov + mixture_cov.T),
        draws=stacked if cfg.store_draws else None,
        w_mean=chain.W.mean(axis=0),
        theta_s=chain.theta_s,
        theta_w=chain.theta_w,
        skipped=skipped,
        cosmology_id=ws.cosmology_id,
    )


class DgpFcoService:
    """Service for fitting the deep GP to fused spectra."""

    def __init__(self, cfg: DgpConfig):
        """Initialize with a sampler configuration."""
        self.cfg = cfg

    def fit(self, ws: WeightedSpectrum) -> Tuple[WarpChain, PosteriorSpectrum]:
        """
        Sample the chain and pool the posterior of one cosmology.

        Args:
            ws: Fused observation

        Returns:
            (chain, posterior)
        """
        try:
            chain = fit(ws, self.cfg)
            return chain, posterior_spectrum(chain, ws, self.cfg)
        except DgpFcoError:
            raise
        except Exception as e:
            raise NumericalError(f"Failed to fit {ws.cosmology_id}: {str(e)}")

    def fit_many(self, spectra: List[WeightedSpectrum], jobs: int = 1) -> List[Tuple[WarpChain, PosteriorSpectrum]]:
        """Fit independent cosmologies on up to ``jobs`` workers; output order follows input order."""
        if jobs == 1 or len(spectra) <= 1:
            return [self.fit(ws) for ws in spectra]
        return Parallel(n_jobs=jobs)(delayed(self.fit)(ws) for ws in spectra)
