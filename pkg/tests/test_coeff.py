import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from aggextremes.aggregation import (
    CellAverage,
    CovariateBasis,
    CovariateSurface,
    Max,
    PointEval,
    Region,
)
from aggextremes.coeff import (
    SpectralSampler,
    multivariate_tail_mc,
    theta_avg_closed_form,
    theta_mc,
    theta_power_1d,
)
from aggextremes.errors import LinearityError, ParameterDomainError
from aggextremes.variogram import VariogramParams


class TestClosedForm:
    @pytest.mark.parametrize("alpha,expected", [
        (0.5, np.exp(-1 / 7.5)), (1.0, np.exp(-1 / 12)), (1.5, np.exp(-1 / 17.5)),
        (2.0, np.exp(-1 / 24)),
    ])
    def test_unit_interval_values(self, alpha, expected):
        assert theta_power_1d(1.0, alpha) == pytest.approx(expected, rel=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.2, 2.0), st.floats(0.2, 5.0), st.floats(0.5, 3.0))
    def test_quadrature_matches_one_dimensional_formula(self, alpha, T, lam):
        p = VariogramParams(alpha, lam)
        assert theta_avg_closed_form(Region(0, T), p=p) == pytest.approx(
            theta_power_1d(T, alpha, lam), rel=1e-7)

    @given(st.floats(0.1, 2.0), st.floats(0.1, 10.0))
    def test_in_unit_interval(self, alpha, T):
        assert 0 < theta_power_1d(T, alpha) <= 1

    def test_decreasing_in_length(self):
        assert theta_power_1d(2.0, 1.0) < theta_power_1d(1.0, 1.0)

    def test_constant_covariate_irrelevant(self):
        r = Region(0, 1, 0, 2)
        p = VariogramParams(1.2, 0.8)
        assert theta_avg_closed_form(r, CovariateSurface.constant(5.0), p) == pytest.approx(
            theta_avg_closed_form(r, None, p), rel=1e-12)

    def test_nonpositive_covariate(self):
        A = CovariateSurface(CovariateBasis.coordinates(["a0", "a1"], [0]), [-0.5, 1.0])
        with pytest.raises(ParameterDomainError):
            theta_avg_closed_form(Region(0, 1, 0, 1), A)

    def test_bad_length(self):
        with pytest.raises(ParameterDomainError):
            theta_power_1d(0.0, 1.0)


class TestMonteCarlo:
    def test_matches_closed_form_two_dimensional(self):
        p = VariogramParams(1.0, 1.0)
        r = Region(0, 1, 0, 1)
        s = SpectralSampler.on_gauss_grid(p, r, 12)
        est = theta_mc(CellAverage(r), 0.0, sampler=s, n=20_000, seed=1)
        assert abs(est.value - theta_avg_closed_form(r, p=p)) < 3 * est.se

    def test_weighted_average_matches_closed_form(self):
        p = VariogramParams(1.5, 1.0)
        r = Region(0, 2, 0, 1)
        A = CovariateSurface(CovariateBasis.coordinates(["a0", "a1"], [0]), [0.8, 0.4])
        s = SpectralSampler.on_gauss_grid(p, r, (16, 8))
        est = theta_mc(CellAverage(r), 0.0, A=A, sampler=s, n=20_000, seed=2)
        assert abs(est.value - theta_avg_closed_form(r, A, p)) < 3 * est.se

    def test_pair_maximum_is_bivariate_exponent_measure(self):
        p = VariogramParams(1.0, 1.0)
        s = SpectralSampler(p, np.array([[0.0], [1.0]]), origin=[0.0], spacing=np.array([1.0]))
        est = multivariate_tail_mc([PointEval((0.0,)), PointEval((1.0,))], [0.0, 0.0], 0.0,
                                   sampler=s, n=100_000, seed=3)
        assert abs(est.value - 2 * norm.cdf(0.5)) < 3 * est.se

    def test_max_functional_positive_xi(self):
        p = VariogramParams(1.0, 1.0)
        s = SpectralSampler(p, np.array([[0.0], [4.0]]), spacing=np.array([4.0]))
        est = theta_mc(Max(((0.0,), (4.0,))), 1.0, sampler=s, n=50_000, seed=4)
        assert abs(est.value - 2 * norm.cdf(1.0)) < 3 * est.se

    def test_point_coefficient_is_one(self):
        p = VariogramParams(1.0, 1.0)
        s = SpectralSampler.on_grid(p, Region(0, 1), 8)
        est = theta_mc(PointEval((0.3125,)), 0.0, sampler=s, n=5000, seed=0)
        assert est.value == pytest.approx(1.0, abs=5 * est.se + 1e-12)

    def test_single_functional_threshold_scaling(self):
        p = VariogramParams(1.0, 1.0)
        s = SpectralSampler.on_grid(p, Region(0, 1), 16)
        f = CellAverage(Region(0, 1))
        a = multivariate_tail_mc([f], [0.7], 0.0, sampler=s, n=4000, seed=5)
        b = multivariate_tail_mc([f], [0.0], 0.0, sampler=s, n=4000, seed=5)
        assert a.value == pytest.approx(np.exp(-0.7) * b.value, rel=1e-12)

    def test_reproducible(self):
        p = VariogramParams(1.0, 1.0)
        s = SpectralSampler.on_grid(p, Region(0, 1), 16)
        f = CellAverage(Region(0, 1))
        assert theta_mc(f, 0.0, sampler=s, n=1000, seed=9) == theta_mc(f, 0.0, sampler=s,
                                                                       n=1000, seed=9)

    def test_nonlinear_functional_with_zero_xi(self):
        p = VariogramParams(1.0, 1.0)
        with pytest.raises(LinearityError):
            theta_mc(Max(((0.0,), (1.0,))), 0.0, p=p, n=10)

    def test_threshold_sign(self):
        p = VariogramParams(1.0, 1.0)
        with pytest.raises(ParameterDomainError):
            multivariate_tail_mc([PointEval((0.0,))], [-1.0], 0.5, p=p, n=10)

    def test_needs_sampler_or_params(self):
        with pytest.raises(ParameterDomainError):
            theta_mc(PointEval((0.0,)), 0.0, n=10)

    def test_node_limit(self):
        with pytest.raises(ParameterDomainError):
            SpectralSampler(VariogramParams(), np.zeros((10, 1)), max_nodes=5)
