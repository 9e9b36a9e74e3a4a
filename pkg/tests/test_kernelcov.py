"""Tests for kernel evaluations."""
import numpy as np
import pytest

from models import MaternParams, PowExpParams
from utils import DimensionError, InvalidParameterError
from utils.kernelcov import (
    matern52,
    matern52_cross,
    matern52_matrix,
    powexp_corr,
    powexp_matrix,
    squared_distances,
)


@pytest.fixture
def points():
    """Twelve sorted points on [0, 1]."""
    return np.sort(np.random.default_rng(3).uniform(0.0, 1.0, 12))


def test_matern_zero_distance_is_one():
    """Test that the correlation is exactly one at zero distance."""
    assert matern52(0.0, 0.3) == 1.0
    assert np.all(matern52(np.zeros(4), 2.0) == 1.0)


def test_matern_closed_form():
    """Test the Matern-5/2 formula at a hand-computed squared distance."""
    d, theta = 0.5, 2.0
    r = np.sqrt(5.0 * d / theta)
    expected = (1.0 + r + r * r / 3.0) * np.exp(-r)
    assert matern52(d, theta) == pytest.approx(expected, rel=1e-14)
    assert matern52(1.0, 1.0) == pytest.approx((1.0 + np.sqrt(5.0) + 5.0 / 3.0) * np.exp(-np.sqrt(5.0)), rel=1e-14)
    assert matern52(1.0, 1.0) == pytest.approx(0.523994, abs=1e-6)


def test_matern_is_nonincreasing():
    """Test monotonicity in the distance over random pairs."""
    rng = np.random.default_rng(1)
    a, b = rng.uniform(0.0, 3.0, (2, 500))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    assert np.all(matern52(lo, 0.2) >= matern52(hi, 0.2))


def test_matern_matrix_is_psd_on_simulation_grid():
    """Test that the covariance on {0, 0.1, ..., 4} has no negative eigenvalues beyond round-off."""
    x = np.linspace(0.0, 4.0, 41)
    cov = matern52_matrix(x, MaternParams(lengthscale=0.01, scale=0.0225))
    assert np.min(np.linalg.eigvalsh(cov)) > -1e-10
    assert np.allclose(np.diag(cov), 0.0225)


def test_matern_matrix_edge_cases():
    """Test identical points and a single point."""
    ones = matern52_matrix(np.zeros(3), MaternParams(lengthscale=0.5))
    assert np.array_equal(ones, np.ones((3, 3)))
    single = matern52_matrix(np.array([2.0]), MaternParams(lengthscale=0.5, scale=2.0, jitter=0.1))
    assert single.shape == (1, 1) and single[0, 0] == pytest.approx(2.1)


def test_matern_underflow_is_zero():
    """Test that far-apart points get an exact zero rather than a denormal."""
    assert matern52(1e6, 1e-6) == 0.0


def test_matern_rejects_bad_arguments():
    """Test that nonpositive lengthscales and negative distances are rejected."""
    with pytest.raises(InvalidParameterError):
        matern52(0.1, 0.0)
    with pytest.raises(InvalidParameterError):
        matern52(-0.1, 1.0)


def test_matern_matrix_structure(points):
    """Test symmetry and the diagonal value of the covariance."""
    params = MaternParams(lengthscale=0.05, scale=0.3, jitter=1e-8)
    cov = matern52_matrix(points, params)

    assert cov.shape == (12, 12)
    assert np.array_equal(cov, cov.T)
    assert np.allclose(np.diag(cov), 0.3 + 1e-8, rtol=0, atol=1e-15)


def test_matern_uses_squared_distance(points):
    """Test that the cross covariance is evaluated at squared input distances."""
    params = MaternParams(lengthscale=0.2, scale=1.5)
    cross = matern52_cross(points[:3], points, params)
    expected = 1.5 * matern52((points[:3, None] - points[None, :]) ** 2, 0.2)
    assert np.allclose(cross, expected, rtol=1e-14, atol=0)
    assert np.allclose(squared_distances(points, points)[0], (points - points[0]) ** 2)


def test_powexp_known_value():
    """Test a one-dimensional correlation at unit distance with beta = 0 and alpha = 2."""
    params = PowExpParams(beta=np.array([0.0]), alpha=2.0)
    assert powexp_corr([0.0], [1.0], params) == pytest.approx(np.exp(-1.0), rel=1e-14)
    assert powexp_corr([0.4], [0.4], params) == 1.0


def test_powexp_matrix_is_product_of_factors():
    """Test that the matrix form agrees with the pairwise correlation."""
    rng = np.random.default_rng(0)
    a, b = rng.uniform(size=(4, 3)), rng.uniform(size=(5, 3))
    params = PowExpParams(beta=np.array([0.5, -0.2, 1.0]))
    matrix = powexp_matrix(a, b, params)

    assert matrix.shape == (4, 5)
    assert matrix[2, 3] == pytest.approx(powexp_corr(a[2], b[3], params), rel=1e-13)


def test_powexp_dimension_mismatch():
    """Test that inputs must match the length of beta."""
    params = PowExpParams(beta=np.zeros(2))
    with pytest.raises(DimensionError):
        powexp_corr([0.0, 1.0, 2.0], [0.0, 1.0, 2.0], params)
    with pytest.raises(DimensionError):
        powexp_matrix(np.zeros((3, 3)), np.zeros((2, 3)), params)


def test_powexp_alpha_range():
    """Test that alpha outside (0, 2] is rejected."""
    with pytest.raises(InvalidParameterError):
        PowExpParams(beta=np.zeros(1), alpha=2.5)
