"""Tests for the simulation study."""
import numpy as np
import pytest

from models import DgpConfig, SimScenario, SimulationSpec
from services import SimulationStudyService
from services.simulation_study_service import (
    baseline_gp_fit,
    build_sigma_A,
    build_sigma_B,
    draw_sim_params,
    eval_f1,
    eval_f2,
    run_replicate,
    sim_grid,
    simulate_realizations,
)
from utils import ConfigurationError
from utils.gaussmath import mse


@pytest.fixture
def tiny_config():
    """A sampler short enough for unit tests."""
    return DgpConfig(iterations=30, burn_in=10, thin=2, seed=3)


def test_test_functions_known_values():
    """Test f1 at the origin and f2 at x = 3."""
    assert eval_f1(0.0, 1.2, 2.0) == pytest.approx(1.2)
    assert np.all(eval_f1(np.linspace(0.0, 4.0, 9), 0.0, 2.0) == 0.0)
    expected = 1.0 + np.exp(-4.0 * 0.8) - 0.05 * np.sin(8.8)
    assert eval_f2(3.0, 1.1, 0.8) == pytest.approx(expected, rel=1e-12)


def test_parameter_draws_within_bounds():
    """Test that drawn parameters stay in their uniform ranges."""
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = draw_sim_params(rng)
        assert 0.5 <= p.m1 <= 1.5 and 1.5 <= p.u1 <= 2.5
        assert 0.6 <= p.m2 <= 1.4 and 0.6 <= p.u2 <= 1.4


def test_simulation_grid():
    """Test the 41-point grid on [0, 4]."""
    grid = sim_grid()
    assert grid.n == 41
    assert grid.x[0] == 0.0 and grid.x[-1] == 4.0


def test_stationary_covariance_diagonal():
    """Test the variance of setting A."""
    cov = build_sigma_A(sim_grid().x)
    assert np.allclose(np.diag(cov), 0.0225 + 1e-8, rtol=0, atol=1e-15)
    assert np.array_equal(cov, cov.T)


def test_decaying_covariance_diagonal():
    """Test that setting B starts at 0.1 and decays along the grid."""
    x = sim_grid().x
    diag = np.diag(build_sigma_B(x))
    assert diag[0] == pytest.approx(0.1 + 1e-8, rel=1e-12)
    assert diag[-1] == pytest.approx(0.1 * 1.5 ** -4.0 + 1e-8, rel=1e-12)
    assert np.all(np.diff(diag) < 0)


def test_realizations_are_reproducible():
    """Test that the same scenario and replicate give the same draws."""
    scenario = SimScenario("f2", "B", r=4, seed=11)
    _, params, truth, first = simulate_realizations(scenario, 2)
    _, again_params, _, second = simulate_realizations(scenario, 2)
    _, _, _, other = simulate_realizations(scenario, 3)

    assert first.shape == (4, 41) and truth.shape == (41,)
    assert params == again_params
    assert np.array_equal(first, second)
    assert not np.array_equal(first, other)


def test_realization_variance_matches_covariance():
    """Test that 200 realizations reproduce the variance of setting A."""
    _, _, truth, Y = simulate_realizations(SimScenario("f1", "A", r=200, seed=8), 0)
    ratio = Y.var(axis=0, ddof=1) / 0.0225
    assert abs(ratio.mean() - 1.0) < 0.1
    assert np.all(np.abs(ratio - 1.0) < 0.45)
    assert np.abs(Y.mean(axis=0) - truth).max() < 0.05


def test_baseline_tracks_smooth_truth():
    """Test that the baseline GP recovers a smooth curve from noisy replicates."""
    grid = sim_grid()
    truth = eval_f2(grid.x, 1.0, 1.0)
    rng = np.random.default_rng(5)
    Y = truth + rng.normal(0.0, 0.05, size=(5, grid.n))

    post = baseline_gp_fit(Y, grid)

    assert mse(truth, post.mean) < 2e-3
    assert np.all(np.diag(post.cov) >= 0.0)


def test_replicate_scores_both_methods(tiny_config):
    """Test that one replicate produces a row for each method."""
    result = run_replicate(SimScenario("f1", "A", r=5, seed=2), 0, tiny_config)
    rows = result.rows()

    assert sorted(row["method"] for row in rows) == ["baseline", "dgpfco"]
    assert "baseline" in result.scores
    for row in rows:
        if not row["error"]:
            assert np.isfinite(row["mse"]) and np.isfinite(row["log_score"])


def test_replicate_without_baseline(tiny_config):
    """Test that the baseline can be switched off."""
    result = run_replicate(SimScenario("f2", "N", r=3, seed=2), 1, tiny_config, baseline=False)
    assert [row["method"] for row in result.rows()] == ["dgpfco"]


def test_study_row_count(tiny_config):
    """Test that the tidy table has scenarios x replicates x methods rows."""
    spec = SimulationSpec(replicates=2, functions=("f1",), variances=("A", "N"), r_values=(3,), baseline=True)
    frame = SimulationStudyService(tiny_config).run(spec, seed=4)

    assert len(frame) == 2 * 2 * 2
    assert set(frame["method"]) == {"baseline", "dgpfco"}
    assert list(frame.columns[:6]) == ["scenario", "function", "variance", "r", "rep", "method"]


def test_invalid_scenario():
    """Test that unknown settings are configuration errors."""
    with pytest.raises(ConfigurationError):
        SimScenario("f3", "A")
    with pytest.raises(ConfigurationError):
        SimScenario("f1", "C")
    with pytest.raises(ConfigurationError):
        SimScenario("f1", "A", r=0)


@pytest.mark.slow
def test_noise_free_recovery():
    """Test that both methods recover the truth when the realizations carry only jitter."""
    scenario = SimScenario("f2", "N", r=5, seed=6)
    result = run_replicate(scenario, 0, DgpConfig(iterations=400, burn_in=200, thin=2, seed=6))
    assert not result.errors
    assert result.scores["baseline"].mse < 1e-6
    assert result.scores["dgpfco"].mse < 1e-6


@pytest.mark.slow
def test_dgp_beats_baseline_median_log_score():
    """Test lower median log scores than the baseline in both decaying-variance scenarios and 3 of 4 overall."""
    spec = SimulationSpec(replicates=8, functions=("f1", "f2"), variances=("A", "B"), r_values=(5,), baseline=True)
    cfg = DgpConfig(iterations=600, burn_in=300, thin=3, seed=1)
    frame = SimulationStudyService(cfg, jobs=-1).run(spec, seed=1)

    medians = frame.groupby(["function", "variance", "method"])["log_score"].median().unstack("method")
    better = medians["dgpfco"] < medians["baseline"]
    assert better[("f1", "B")] and better[("f2", "B")]
    assert better.sum() >= 3
