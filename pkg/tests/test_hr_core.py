import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from aggextremes.errors import DependenceDegeneracyError, InvalidGammaError
from aggextremes.hr_core import (
    HRModel,
    censored_partial_V,
    chi_pair,
    exponent_measure,
    exponent_measure_V,
    sigma_from_gamma,
)


def bivariate_V(x1, x2, g):
    r = np.sqrt(g)
    return (np.exp(-x1) * norm.cdf(r / 2 + (x2 - x1) / r)
            + np.exp(-x2) * norm.cdf(r / 2 + (x1 - x2) / r))


def line_gamma(m, alpha=1.0):
    s = np.arange(m, dtype=float)
    return np.abs(s[:, None] - s[None]) ** alpha


class TestGammaValidation:
    @pytest.mark.parametrize("G", [
        np.array([[0.0, 1.0], [2.0, 0.0]]),
        np.array([[1.0, 1.0], [1.0, 0.0]]),
        np.array([[0.0, -1.0], [-1.0, 0.0]]),
        np.array([[0.0, np.nan], [np.nan, 0.0]]),
        np.zeros((2, 3)),
    ])
    def test_invalid(self, G):
        with pytest.raises(InvalidGammaError):
            HRModel(G)

    def test_not_conditionally_negative_definite(self):
        G = np.array([[0, 1, 9], [1, 0, 1], [9, 1, 0]], float)
        with pytest.raises(InvalidGammaError):
            sigma_from_gamma(G, 0)

    def test_sigma_entries(self):
        G = line_gamma(3)
        S = sigma_from_gamma(G, 0)
        np.testing.assert_allclose(S, [[1.0, 1.0], [1.0, 2.0]])

    def test_anchor_out_of_range(self):
        with pytest.raises(IndexError):
            sigma_from_gamma(line_gamma(3), 3)


class TestExponentMeasure:
    def test_single_coordinate_normalization(self):
        G = line_gamma(4)
        x = np.array([0.7, np.inf, np.inf, np.inf])
        assert exponent_measure_V(x, G).value == pytest.approx(np.exp(-0.7), rel=1e-14)

    @pytest.mark.parametrize("g", [0.5, 2.0, 4.0, 8.0])
    def test_bivariate_closed_form(self, g):
        G = np.array([[0.0, g], [g, 0.0]])
        assert exponent_measure_V([0.3, -0.2], G).value == pytest.approx(
            bivariate_V(0.3, -0.2, g), rel=1e-13)

    def test_bivariate_limits(self):
        Gd = np.zeros((2, 2))
        assert exponent_measure_V([0.0, 1.0], Gd).value == pytest.approx(1.0)
        Gi = np.array([[0.0, 1e4], [1e4, 0.0]])
        assert exponent_measure_V([0.0, 1.0], Gi).value == pytest.approx(1 + np.exp(-1), rel=1e-6)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(0.1, 9))
    def test_bivariate_homogeneity(self, x1, x2, c, g):
        G = np.array([[0.0, g], [g, 0.0]])
        a = exponent_measure_V([x1 + c, x2 + c], G).value
        b = np.exp(-c) * exponent_measure_V([x1, x2], G).value
        assert a == pytest.approx(b, rel=1e-10)

    def test_monte_carlo_homogeneity_five(self):
        G = line_gamma(5, 1.5) / 2
        x = np.array([0.1, -0.3, 0.5, 0.0, 0.2])
        a = exponent_measure_V(x + 0.8, G, 200_000, seed=1)
        b = exponent_measure_V(x, G, 200_000, seed=2)
        assert abs(a.value - np.exp(-0.8) * b.value) < 3 * np.hypot(a.se, np.exp(-0.8) * b.se)

    def test_euler_identity_matches_monte_carlo(self):
        G = line_gamma(4, 1.2)
        x = np.array([0.2, 0.0, -0.1, 0.4])
        mc = exponent_measure_V(x, G, 400_000, seed=3)
        assert exponent_measure(x, G) == pytest.approx(mc.value, abs=3 * mc.se + 1e-4)

    def test_bounds(self):
        G = line_gamma(4)
        x = np.zeros(4)
        v = exponent_measure(x, G)
        assert 1.0 <= v <= 4.0

    def test_infinite_coordinates_drop_out(self):
        G = line_gamma(4)
        x = np.array([0.1, np.inf, -0.2, np.inf])
        assert exponent_measure_V(x, G).value == pytest.approx(
            bivariate_V(0.1, -0.2, G[0, 2]), rel=1e-13)


class TestCensoredDerivative:
    @pytest.mark.parametrize("g", [0.5, 2.0, 4.0, 8.0])
    def test_bivariate_single_exceedance(self, g):
        G = np.array([[0.0, g], [g, 0.0]])
        z, h = np.array([0.4, -0.1]), 1e-5
        fd = -(bivariate_V(z[0] + h, z[1], g) - bivariate_V(z[0] - h, z[1], g)) / (2 * h)
        assert censored_partial_V(z, [0], G) == pytest.approx(fd, abs=1e-8)

    @pytest.mark.parametrize("g", [0.5, 2.0, 4.0, 8.0])
    def test_bivariate_both_exceed(self, g):
        G = np.array([[0.0, g], [g, 0.0]])
        z, h = np.array([0.4, -0.1]), 1e-4

        def V(a, b):
            return bivariate_V(a, b, g)

        fd = (V(z[0] + h, z[1] + h) - V(z[0] + h, z[1] - h) - V(z[0] - h, z[1] + h)
              + V(z[0] - h, z[1] - h)) / (4 * h * h)
        assert censored_partial_V(z, [0, 1], G) == pytest.approx(-fd, abs=1e-6)

    def test_positive(self):
        G = line_gamma(4)
        assert censored_partial_V([0.3, 0.1, 2.0, 1.0], [0, 1], G) > 0

    def test_degenerate_pair(self):
        G = np.array([[0, 0, 1], [0, 0, 1], [1, 1, 0]], float)
        with pytest.raises(DependenceDegeneracyError):
            censored_partial_V([0.0, 0.0, 1.0], [0, 1], G)

    def test_invalid_sets(self):
        G = line_gamma(3)
        with pytest.raises(ValueError):
            censored_partial_V([0, 0, 0], [], G)
        with pytest.raises(ValueError):
            censored_partial_V([0, 0, 0], [1, 1], G)

    def test_adaptive_tolerance_path(self):
        G = line_gamma(4, 1.3)
        z = np.array([0.5, 0.2, 0.9, 1.1])
        a = censored_partial_V(z, [0], G, tol=1e-5)
        b = censored_partial_V(z, [0], G)
        assert a == pytest.approx(b, rel=1e-3)


class TestChi:
    def test_values(self):
        assert chi_pair(0.0) == 1.0
        assert chi_pair(4.0) == pytest.approx(2 * (1 - norm.cdf(1.0)))

    @given(st.floats(0, 50), st.floats(0, 50))
    def test_monotone(self, a, b):
        lo, hi = sorted([a, b])
        assert chi_pair(lo) >= chi_pair(hi)

    def test_negative(self):
        with pytest.raises(InvalidGammaError):
            chi_pair(-1.0)
