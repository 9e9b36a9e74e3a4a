"""Tests for the LOESS smoother."""
import numpy as np
import pytest

from utils import DimensionError, InvalidParameterError, SingularFitError
from utils.smoothing import loess_smooth


@pytest.fixture
def x():
    return np.linspace(-1.0, 2.0, 40)


@pytest.mark.parametrize("span", [0.2, 0.5, 0.75, 1.0])
def test_reproduces_quadratics(x, span):
    """Test that a quadratic is recovered exactly for any span."""
    y = 0.3 - 1.2 * x + 0.7 * x ** 2
    assert np.max(np.abs(loess_smooth(y, x, span) - y)) < 1e-8


def test_constant_stays_constant(x):
    """Test that constant data smooth to the same constant."""
    assert np.allclose(loess_smooth(np.full(40, 2.5), x), 2.5, atol=1e-12)


def test_reduces_noise(x):
    """Test that smoothing a noisy sine shrinks the residual variance."""
    rng = np.random.default_rng(8)
    truth = np.sin(2.0 * x)
    noisy = truth + rng.normal(0.0, 0.2, x.shape[0])
    smoothed = loess_smooth(noisy, x, 0.3)
    assert np.var(smoothed - truth) < np.var(noisy - truth)


def test_bad_arguments(x):
    """Test span and length checks."""
    with pytest.raises(InvalidParameterError):
        loess_smooth(np.zeros(40), x, 0.0)
    with pytest.raises(DimensionError):
        loess_smooth(np.zeros(4), x[:4])


def test_degenerate_window():
    """Test that identical inputs raise a singular-fit error."""
    with pytest.raises(SingularFitError):
        loess_smooth(np.arange(6.0), np.ones(6))
