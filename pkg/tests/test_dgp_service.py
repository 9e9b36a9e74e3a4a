"""Tests for the deep GP sampler and posterior."""
import math

import numpy as np
import pytest
from scipy.stats import gamma, multivariate_normal

from models import DgpConfig, ErrorConvention, GaussianDist, MaternParams, WarpChain, WavenumberGrid, WeightedSpectrum
from services import DgpFcoService
from services.dgp_service import (
    conditional_moments,
    ess_update,
    fit,
    gamma_logpdf,
    integrated_loglik,
    lognormal_proposal_logpdf,
    marginal_loglik,
    mh_log_accept_ratio,
    mh_update_theta,
    monotone_warp,
    posterior_moments,
    posterior_spectrum,
)
from utils import ConfigurationError, SamplerError, substream
from utils.gaussmath import condition_joint, mvn_logpdf
from utils.kernelcov import matern52_matrix


def _spd(n: int, seed: int, ridge: float = 0.3) -> np.ndarray:
    a = np.random.default_rng(seed).normal(size=(n, n)) * 0.1
    return a @ a.T + ridge * np.eye(n)


@pytest.fixture
def small_spectrum():
    """Twelve-point fused observation with small diagonal error."""
    x = np.linspace(-2.0, 0.0, 12)
    grid = WavenumberGrid.from_x(x)
    ybar = np.sin(2.0 * x) + np.random.default_rng(0).normal(0.0, 0.03, 12)
    return WeightedSpectrum(
        ybar=ybar,
        lam=np.full(12, 1e3),
        sigma_eps=1e-3 * np.eye(12),
        convention=ErrorConvention.DIAGONAL,
        grid=grid,
        cosmology_id="small",
    )


@pytest.fixture
def short_config():
    return DgpConfig(iterations=40, burn_in=10, thin=3, seed=7)


# ============================================================================
# Warp
# ============================================================================

def test_constant_latent_gives_identity(small_spectrum):
    """Test that a constant latent draw leaves the inputs unchanged."""
    x = small_spectrum.grid.x
    assert np.allclose(monotone_warp(np.full(12, 0.7), x), x, rtol=0, atol=1e-12)


def test_warp_is_monotone_with_fixed_endpoints():
    """Test monotonicity and exact endpoints over many random draws."""
    x = np.linspace(-3.0, 0.5, 25)
    for seed in range(1000):
        W = monotone_warp(np.random.default_rng(seed).normal(0.0, 2.0, 25), x)
        assert np.all(np.diff(W) >= 0)
        assert W[0] == x[0] and W[-1] == x[-1]


# ============================================================================
# Integrated likelihood and conditional moments
# ============================================================================

def test_loglik_without_latent_term():
    """Test that a zero scale reduces to the density of the error alone."""
    rng = np.random.default_rng(1)
    sigma_eps = _spd(6, 2)
    y, mu = rng.normal(size=6), rng.normal(size=6)
    value = integrated_loglik(y, np.linspace(0, 1, 6), 0.3, sigma_eps, mu_s=mu, scale=0.0)
    assert value == pytest.approx(multivariate_normal(mu, sigma_eps).logpdf(y), rel=1e-10)


def test_loglik_standard_normal_case():
    """Test -(n/2) log(2 pi) when the mean equals the data and the covariance is the identity."""
    W = np.linspace(0.0, 1.0, 5)
    latent = matern52_matrix(W, MaternParams(0.01, 0.1))
    sigma_eps = np.eye(5) - latent
    y = np.arange(5.0)
    value = integrated_loglik(y, W, 0.01, sigma_eps, mu_s=y, scale=0.1)
    assert value == pytest.approx(-2.5 * math.log(2.0 * math.pi), rel=1e-10)


def _random_instance(seed: int):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 16))
    a, b = rng.normal(size=(n, n)), rng.normal(size=(n, n))
    sigma_s = a @ a.T / n + 0.1 * np.eye(n)
    sigma_eps = b @ b.T / n + 0.1 * np.eye(n)
    return 0.5 * (sigma_s + sigma_s.T), 0.5 * (sigma_eps + sigma_eps.T), rng.normal(size=n), rng.normal(size=n)


def _joint(mu: np.ndarray, sigma_s: np.ndarray, sigma_eps: np.ndarray):
    return np.concatenate([mu, mu]), np.block([[sigma_s, sigma_s], [sigma_s, sigma_s + sigma_eps]])


@pytest.mark.parametrize("seed", range(20))
def test_loglik_matches_marginalization_oracle(seed):
    """Test log p(ybar) against p(y|S) p(S) / p(S|y) for random SPD covariances."""
    sigma_s, sigma_eps, mu, y = _random_instance(seed)
    s = np.random.default_rng(100 + seed).normal(size=mu.shape[0])
    joint_mean, joint_cov = _joint(mu, sigma_s, sigma_eps)
    oracle = (
        mvn_logpdf(y, GaussianDist(mean=s, cov=sigma_eps))
        + mvn_logpdf(s, GaussianDist(mean=mu, cov=sigma_s))
        - mvn_logpdf(s, condition_joint(joint_mean, joint_cov, y))
    )
    assert marginal_loglik(y, sigma_s, sigma_eps, mu_s=mu) == pytest.approx(oracle, rel=1e-8, abs=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_posterior_moments_match_joint_conditioning(seed):
    """Test (m, C) against conditioning the stacked joint of (S, ybar) for random SPD covariances."""
    sigma_s, sigma_eps, mu, y = _random_instance(seed)
    m, C = posterior_moments(y, sigma_s, sigma_eps, mu_s=mu)
    cond = condition_joint(*_joint(mu, sigma_s, sigma_eps), y)

    assert np.allclose(m, cond.mean, rtol=0, atol=1e-8)
    assert np.allclose(C, cond.cov, rtol=0, atol=1e-8)


def test_matern_loglik_uses_warped_kernel():
    """Test that the Matern wrapper equals the general form with K(W, theta_S)."""
    n, theta = 8, 0.02
    rng = np.random.default_rng(5)
    W = np.linspace(0.0, 1.0, n) ** 2
    sigma_eps = _spd(n, 6)
    mu, y = rng.normal(size=n), rng.normal(size=n)
    sigma_s = matern52_matrix(W, MaternParams(theta, 0.8))

    expected = marginal_loglik(y, sigma_s, sigma_eps, mu_s=mu)
    assert integrated_loglik(y, W, theta, sigma_eps, mu_s=mu, scale=0.8) == pytest.approx(expected, rel=1e-12)


def test_conditional_moments_match_joint_conditioning():
    """Test (m, C) for one warp against conditioning the stacked joint of (S, ybar)."""
    n, theta = 10, 0.02
    rng = np.random.default_rng(9)
    W = np.linspace(0.0, 1.0, n)
    sigma_s = matern52_matrix(W, MaternParams(theta, 0.8))
    sigma_eps = _spd(n, 10)
    mu, y = rng.normal(size=n), rng.normal(size=n)

    m, C = conditional_moments(y, W, theta, sigma_eps, mu_s=mu, scale=0.8)
    cond = condition_joint(*_joint(mu, sigma_s, sigma_eps), y)

    assert np.allclose(m, cond.mean, rtol=0, atol=1e-8)
    assert np.allclose(C, cond.cov, rtol=0, atol=1e-8)


def test_conditional_moments_limits():
    """Test the data-dominant and prior-dominant limits."""
    W = np.linspace(0.0, 1.0, 9)
    y = np.cos(3.0 * W)
    m_data, _ = conditional_moments(y, W, 0.001, 1e-10 * np.eye(9))
    assert np.max(np.abs(m_data - y)) < 1e-4

    m_prior, _ = conditional_moments(y, W, 0.001, np.eye(9), scale=1e-10)
    assert np.max(np.abs(m_prior)) < 1e-6


# ============================================================================
# Elliptical slice sampling
# ============================================================================

def _batch_means_se(values: np.ndarray, batches: int = 50) -> np.ndarray:
    means = values.reshape(batches, -1, values.shape[1]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(batches)


def test_ess_recovers_prior_under_flat_likelihood():
    """Test that a flat likelihood leaves the prior mean and variances intact within 3 Monte Carlo errors."""
    n, iterations = 10, 50000
    x = np.linspace(0.0, 1.0, n)
    prior = GaussianDist(mean=np.zeros(n), cov=matern52_matrix(x, MaternParams(0.05, 1.0, 1e-8)))
    rng = substream(0, "ess-flat")
    z, ll = np.zeros(n), 0.0
    draws = np.empty((iterations, n))
    for i in range(iterations):
        z, ll, _ = ess_update(z, prior.factor, lambda v: 0.0, rng, current_loglik=ll)
        draws[i] = z

    squares = draws ** 2
    assert np.all(np.abs(draws.mean(axis=0)) < 3.0 * _batch_means_se(draws))
    assert np.all(np.abs(squares.mean(axis=0) - np.diag(prior.cov)) < 3.0 * _batch_means_se(squares))


def test_ess_concentrates_on_sharp_likelihood():
    """Test the chain mean under a sharp Gaussian likelihood and that brackets always close."""
    target = np.array([0.5, -0.3])
    rng = substream(1, "ess-sharp")

    def loglik(v: np.ndarray) -> float:
        return float(-0.5 * np.sum((v - target) ** 2) / 0.05 ** 2)

    z = np.zeros(2)
    ll = loglik(z)
    kept, shrinks = [], []
    for i in range(5000):
        z, ll, count = ess_update(z, np.eye(2), loglik, rng, current_loglik=ll)
        shrinks.append(count)
        if i >= 500:
            kept.append(z)

    expected = target / (1.0 + 0.05 ** 2)
    assert np.allclose(np.mean(kept, axis=0), expected, atol=0.05)
    assert max(shrinks) < 200


# ============================================================================
# Metropolis-Hastings
# ============================================================================

def test_gamma_logpdf_matches_scipy():
    """Test the closed-form gamma density in the shape/rate parametrization."""
    for theta in (0.1, 1.0, 3.7):
        expected = gamma.logpdf(theta, a=1.5, scale=1.0 / 4.0)
        assert gamma_logpdf(theta, (1.5, 4.0)) == pytest.approx(expected, rel=1e-12)
    assert gamma_logpdf(0.0, (2.0, 2.0)) == -math.inf


def test_mh_recovers_gamma_prior_mean():
    """Test the long-run mean under a flat likelihood and a gamma(2, 2) prior."""
    rng = substream(3, "mh-flat")
    theta, ll = 1.0, 0.0
    trace = np.empty(40000)
    for i in range(40000):
        theta, ll, _ = mh_update_theta(theta, (2.0, 2.0), 1.0, lambda t: 0.0, rng, ll)
        trace[i] = theta
    assert np.mean(trace[2000:]) == pytest.approx(1.0, abs=0.05)


def test_mh_zero_scale_never_moves():
    """Test that a zero proposal scale keeps the chain in place."""
    rng = np.random.default_rng(0)
    theta = 0.8
    for _ in range(100):
        theta, _, accepted = mh_update_theta(theta, (2.0, 2.0), 0.0, lambda t: -t, rng)
        assert not accepted
    assert theta == 0.8


def test_mh_detailed_balance_on_three_states():
    """Test detailed balance of the transition matrix restricted to three states."""
    states = np.array([0.5, 1.0, 2.0])
    prior, scale = (2.0, 1.5), 0.7

    def loglik(t: float) -> float:
        return -0.5 * (t - 1.2) ** 2

    log_target = np.array([loglik(t) + gamma_logpdf(t, prior) for t in states])
    P = np.zeros((3, 3))
    for i, a in enumerate(states):
        for j, b in enumerate(states):
            if i != j:
                ratio = mh_log_accept_ratio(a, b, loglik(a), loglik(b), prior)
                P[i, j] = math.exp(lognormal_proposal_logpdf(b, a, scale)) * min(1.0, math.exp(ratio))
        P[i, i] = 1.0 - P[i].sum()

    pi = np.exp(log_target - log_target.max())
    flow = pi[:, None] * P
    assert np.allclose(flow, flow.T, rtol=1e-12, atol=0)
    assert np.allclose(pi @ P, pi, rtol=1e-12)


# ============================================================================
# Chain and posterior
# ============================================================================

def test_zero_retained_samples_is_configuration_error():
    """Test that a burn-in covering every iteration is rejected."""
    with pytest.raises(ConfigurationError):
        DgpConfig(iterations=10, burn_in=10)


def test_fit_small_chain(small_spectrum, short_config):
    """Test retained count, warp contract and finite likelihoods of a short chain."""
    chain = fit(small_spectrum, short_config)
    x = small_spectrum.grid.x

    assert len(chain) == short_config.retained == 10
    assert np.all(np.isfinite(chain.loglik))
    assert np.all(chain.theta_s > 0) and np.all(chain.theta_w > 0)
    for W in chain.W:
        assert np.all(np.diff(W) >= 0)
        assert W[0] == x[0] and W[-1] == x[-1]
    assert 0.0 <= chain.theta_s_acceptance <= 1.0


def test_fit_is_deterministic(small_spectrum, short_config):
    """Test that the same seed gives the same chain."""
    first = fit(small_spectrum, short_config)
    second = fit(small_spectrum, short_config)
    assert np.array_equal(first.theta_s, second.theta_s)
    assert np.array_equal(first.W, second.W)


def test_posterior_bands(small_spectrum, short_config):
    """Test that the pooled posterior is well formed."""
    chain, post = DgpFcoService(short_config).fit(small_spectrum)

    assert post.T == len(chain)
    assert post.skipped == 0
    assert np.all(post.lower <= post.mean) and np.all(post.mean <= post.upper)
    assert post.mixture_cov.shape == (12, 12)
    assert post.predictive().dim == 12
    assert np.max(np.abs(post.mean - small_spectrum.ybar)) < 0.2


def test_posterior_of_empty_chain(small_spectrum, short_config):
    """Test that pooling an empty chain is a sampler error."""
    empty = WarpChain(samples=[], x=small_spectrum.grid.x)
    with pytest.raises(SamplerError):
        posterior_spectrum(empty, small_spectrum, short_config)


@pytest.mark.slow
def test_warp_stays_near_identity_for_stationary_data():
    """Test that data from a stationary GP keep the mean warp near the identity."""
    x = np.linspace(-2.0, 0.0, 20)
    grid = WavenumberGrid.from_x(x)
    unit = (x - x[0]) / (x[-1] - x[0])
    latent = GaussianDist(mean=np.zeros(20), cov=matern52_matrix(unit, MaternParams(0.6, 1.0, 1e-8)))
    for seed in range(5):
        rng = substream(seed, "stationary")
        s = latent.mean + latent.factor @ rng.standard_normal(20)
        ws = WeightedSpectrum(
            ybar=s + rng.normal(0.0, 0.01, 20), lam=np.full(20, 1e4), sigma_eps=1e-4 * np.eye(20),
            convention=ErrorConvention.DIAGONAL, grid=grid, cosmology_id=f"stationary{seed}",
        )
        chain = fit(ws, DgpConfig(iterations=300, burn_in=100, thin=2, seed=seed))
        assert np.max(np.abs(chain.W.mean(axis=0) - x)) < 0.2 * (x[-1] - x[0])


@pytest.mark.slow
def test_credible_bands_cover_truths_drawn_from_the_model():
    """Test that 95% bands cover at least 88% of latent truths drawn from the prior."""
    n, noise = 12, 0.1
    x = np.linspace(-2.0, 0.0, n)
    grid = WavenumberGrid.from_x(x)
    unit = (x - x[0]) / (x[-1] - x[0])
    cfg = DgpConfig(iterations=400, burn_in=200, thin=4, seed=0, draws_per_sample=4)
    covered = []
    for seed in range(100):
        rng = substream(seed, "calibration")
        theta_w = rng.gamma(cfg.theta_w_prior[0], 1.0 / cfg.theta_w_prior[1])
        theta_s = rng.gamma(cfg.theta_s_prior[0], 1.0 / cfg.theta_s_prior[1])
        warp = GaussianDist(mean=np.zeros(n), cov=matern52_matrix(unit, MaternParams(theta_w)), jitter=1e-8)
        W = monotone_warp(warp.factor @ rng.standard_normal(n), unit)
        latent = GaussianDist(mean=np.zeros(n), cov=matern52_matrix(W, MaternParams(theta_s)), jitter=1e-8)
        truth = latent.factor @ rng.standard_normal(n)
        ws = WeightedSpectrum(
            ybar=truth + rng.normal(0.0, noise, n), lam=np.full(n, 1.0 / noise ** 2),
            sigma_eps=noise ** 2 * np.eye(n), convention=ErrorConvention.DIAGONAL, grid=grid,
            cosmology_id=f"truth{seed}",
        )
        _, post = DgpFcoService(cfg).fit(ws)
        covered.append((post.lower <= truth) & (truth <= post.upper))

    assert np.mean(covered) >= 0.88
