import numpy as np
import pytest
from numpy.testing import assert_allclose

from inflowcast.errors import InputError
from inflowcast.splines import CyclicSplineBasis, seasonal_phase


@pytest.mark.parametrize("n_knots", [4, 6, 9, 12])
def test_partition_of_unity(n_knots):
    basis = CyclicSplineBasis(n_knots)
    x = np.linspace(0.0, basis.period, 2001)
    assert_allclose(basis.design(x).sum(axis=1), 1.0, atol=1e-12)


def test_periodicity():
    basis = CyclicSplineBasis(6)
    x = np.linspace(0.0, basis.period, 97)
    assert_allclose(basis.design(x), basis.design(x + basis.period), atol=1e-9)
    assert_allclose(basis.design(x), basis.design(x - 3 * basis.period), atol=1e-9)


@pytest.mark.parametrize("deriv", [0, 1, 2])
def test_continuity_across_wrap(deriv):
    basis = CyclicSplineBasis(6)
    eps = 1e-7
    left = basis.design(np.array([basis.period - eps]), deriv=deriv)
    right = basis.design(np.array([eps]), deriv=deriv)
    assert_allclose(left, right, atol=1e-4)


def test_analytic_derivatives_match_finite_differences():
    basis = CyclicSplineBasis(6)
    x = np.linspace(0.5, basis.period - 0.5, 301)
    h = 1e-5
    d1_fd = (basis.design(x + h) - basis.design(x - h)) / (2 * h)
    assert_allclose(basis.design(x, deriv=1), d1_fd, atol=1e-6)
    d2_fd = (basis.design(x + h) - 2 * basis.design(x) + basis.design(x - h)) / h**2
    assert_allclose(basis.design(x, deriv=2), d2_fd, atol=1e-4)


def test_compact_support():
    basis = CyclicSplineBasis(12)
    row = basis.design(np.array([0.0]))[0]
    assert (row > 0).sum() <= 4  # cubic pieces span four knot intervals


def test_too_few_knots_rejected():
    with pytest.raises(InputError):
        CyclicSplineBasis(3)


def test_seasonal_phase_smooth_across_new_year():
    phases = seasonal_phase(np.array(["2015-12-31", "2016-01-01"], dtype="datetime64[D]"))
    gap = (phases[1] - phases[0]) % 365.25
    assert_allclose(gap, 1.0, atol=1e-9)


def test_seasonal_phase_range():
    dates = np.arange(np.datetime64("2000-01-01"), np.datetime64("2030-01-01"), 17)
    phases = seasonal_phase(dates)
    assert phases.min() >= 0.0
    assert phases.max() < 365.25
