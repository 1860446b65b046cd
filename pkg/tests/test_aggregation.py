import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from aggextremes.aggregation import (
    CellAverage,
    CovariateBasis,
    CovariateSurface,
    GammaBuilder,
    Max,
    PointEval,
    QuadratureRule,
    Region,
    SampledField,
    WeightedSum,
    cell_mean,
    check_conditionally_negative_definite,
    evaluate_functional_on_sample,
    functional_means,
    gamma_matrix,
    gauss_grid,
    quadrature_convergence,
    regular_grid,
)
from aggextremes.errors import (
    CoverageError,
    GeometryError,
    ParameterDomainError,
    UnsupportedFunctionalError,
)
from aggextremes.variogram import VariogramParams, gamma


def mean_double_integral_1d(T, alpha):
    return 2 * T ** alpha / ((alpha + 1) * (alpha + 2))


class TestRegion:
    def test_degenerate(self):
        with pytest.raises(GeometryError):
            Region(1.0, 1.0)

    def test_half_specified(self):
        with pytest.raises(GeometryError):
            Region(0, 1, 0, None)

    def test_properties(self):
        r = Region(0, 2, 1, 4)
        assert r.dim == 2
        assert r.area == 6
        np.testing.assert_allclose(r.centroid, [1.0, 2.5])


class TestCellMean:
    def test_polynomial_exact(self):
        r = Region(0, 2, 0, 1)
        assert cell_mean(lambda p: p[:, 0] ** 2 * p[:, 1], r) == pytest.approx(4 / 3 * 0.5)

    def test_requires_region(self):
        with pytest.raises(GeometryError):
            cell_mean(lambda p: p, (0, 1))

    def test_functional_means(self):
        basis = CovariateBasis.coordinates(["c", "x"], [0])
        M = functional_means([CellAverage(Region(0, 2, 0, 1)), PointEval((3.0, 1.0))], basis)
        np.testing.assert_allclose(M, [[1.0, 1.0], [1.0, 3.0]])

    def test_functional_means_reject_max(self):
        with pytest.raises(UnsupportedFunctionalError):
            functional_means([Max(((0.0,), (1.0,)))], CovariateBasis.constant())


class TestGammaMatrix:
    @pytest.mark.parametrize("alpha", [0.3, 0.5, 1.0, 1.5, 1.9])
    @pytest.mark.parametrize("T", [0.5, 1.0, 3.0])
    def test_one_dimensional_cell_mean_integral(self, alpha, T):
        b = GammaBuilder([CellAverage(Region(0, T))], diagonal_only=True)
        I = b.mean_integrals(VariogramParams(alpha, 1.0))[0, 0]
        assert I == pytest.approx(mean_double_integral_1d(T, alpha), rel=1e-6)

    def test_diagonal_exactly_zero(self):
        cells = [CellAverage(Region(i, i + 1, 0, 1)) for i in range(3)]
        G = gamma_matrix(cells + [PointEval((0.5, 0.5))], p=VariogramParams(1.3, 0.8))
        assert np.all(np.diag(G) == 0.0)

    def test_two_points_equal_variogram(self):
        p = VariogramParams(1.2, 0.9, 0.3, 1.4)
        G = gamma_matrix([PointEval((0.0, 0.0)), PointEval((1.0, 2.0))], p=p)
        assert G[0, 1] == pytest.approx(gamma([1.0, 2.0], p))

    def test_cell_point_brute_force(self):
        p = VariogramParams(1.5, 1.0)
        cell, x = Region(0, 1, 0, 1), np.array([2.0, 0.5])
        G = gamma_matrix([CellAverage(cell), PointEval(tuple(x))], p=p)
        f = lambda yy, xx: gamma(np.array([xx, yy]) - x, p)
        m = integrate.dblquad(f, 0, 1, 0, 1, epsabs=1e-11)[0]
        ff = lambda y1, x1, y2, x2: gamma(np.array([x1 - x2, y1 - y2]), p)
        inner = integrate.nquad(ff, [[0, 1]] * 4, opts={"epsabs": 1e-7})[0]
        assert G[0, 1] == pytest.approx(m - 0.5 * inner, rel=1e-5)

    def test_adjacent_cells_one_dimensional(self):
        # mean of |s - t| over [0,1] x [1,2] is 1 for alpha = 1
        G = gamma_matrix([CellAverage(Region(0, 1)), CellAverage(Region(1, 2))],
                         p=VariogramParams(1.0, 1.0))
        assert G[0, 1] == pytest.approx(1.0 - 1.0 / 3.0, rel=1e-10)

    def test_conditionally_negative_definite(self):
        cells = [CellAverage(Region(i, i + 1, j, j + 1)) for i in range(3) for j in range(2)]
        A = CovariateSurface(CovariateBasis.coordinates(["a0", "a1"], [0]), [0.8, 0.4])
        G = gamma_matrix(cells, A, VariogramParams(1.5, 1.0))
        assert check_conditionally_negative_definite(G) <= 1e-10

    def test_covariate_weighting_changes_matrix(self):
        cells = [CellAverage(Region(0, 2, 0, 1)), CellAverage(Region(2, 3, 0, 1))]
        p = VariogramParams(1.0, 1.0)
        A = CovariateSurface(CovariateBasis.coordinates(["a0", "a1"], [0]), [0.2, 1.0])
        assert not np.allclose(gamma_matrix(cells, None, p), gamma_matrix(cells, A, p))

    def test_constant_covariate_is_irrelevant(self):
        cells = [CellAverage(Region(0, 1, 0, 1)), CellAverage(Region(1, 3, 0, 2))]
        p = VariogramParams(0.8, 1.0)
        A = CovariateSurface.constant(3.7)
        np.testing.assert_allclose(gamma_matrix(cells, A, p), gamma_matrix(cells, None, p),
                                   rtol=1e-12)

    def test_quadrature_converged(self):
        cells = [CellAverage(Region(0, 1, 0, 1)), CellAverage(Region(1, 2, 0, 1))]
        _, worst = quadrature_convergence(cells, p=VariogramParams(0.7, 1.0))
        assert worst < 1e-6

    def test_cells_before_points(self):
        with pytest.raises(ValueError):
            gamma_matrix([PointEval((0.0, 0.0)), CellAverage(Region(0, 1, 0, 1))])

    def test_nonlinear_functional_rejected(self):
        with pytest.raises(UnsupportedFunctionalError):
            GammaBuilder([Max(((0.0, 0.0), (1.0, 1.0)))])

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(GeometryError):
            GammaBuilder([CellAverage(Region(0, 1)), PointEval((0.0, 0.0))])

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.2, 2.0), st.floats(0.3, 3.0), st.floats(0.5, 2.0))
    def test_scaling_in_lambda(self, alpha, lam, side):
        cells = [CellAverage(Region(0, side, 0, 1)), CellAverage(Region(side, 2 * side, 0, 1))]
        G1 = gamma_matrix(cells, p=VariogramParams(alpha, 1.0), check=False)
        G2 = gamma_matrix(cells, p=VariogramParams(alpha, lam), check=False)
        np.testing.assert_allclose(G2, G1 * lam ** -alpha, rtol=1e-9, atol=1e-14)


class TestSampledFunctionals:
    def field(self):
        coords, spacing = regular_grid(Region(0, 2, 0, 1), (20, 10))
        vals = coords[:, 0] + 10 * coords[:, 1]
        return SampledField(coords, vals, spacing)

    def test_cell_average_of_linear_field(self):
        f = self.field()
        v = evaluate_functional_on_sample(CellAverage(Region(0, 1, 0, 1)), f)
        assert v == pytest.approx(0.5 + 5.0)

    def test_point_is_nearest_node(self):
        f = self.field()
        v = evaluate_functional_on_sample(PointEval((0.04, 0.06)), f)
        assert v == pytest.approx(0.05 + 0.5)

    def test_max_and_weighted_sum(self):
        f = self.field()
        pts = ((0.05, 0.05), (1.95, 0.95))
        assert evaluate_functional_on_sample(Max(pts), f) == pytest.approx(1.95 + 9.5)
        ws = WeightedSum(pts, (0.5, 0.5))
        assert evaluate_functional_on_sample(ws, f) == pytest.approx(0.5 * (0.55 + 11.45))

    def test_weighted_cell_average(self):
        f = self.field()
        v = evaluate_functional_on_sample(CellAverage(Region(0, 2, 0, 1)), f,
                                          A=lambda p: np.where(p[:, 0] < 1, 1.0, 0.0))
        assert v == pytest.approx(5.5)

    def test_outside_grid(self):
        with pytest.raises(CoverageError):
            evaluate_functional_on_sample(PointEval((5.0, 5.0)), self.field())
        with pytest.raises(CoverageError):
            evaluate_functional_on_sample(CellAverage(Region(1, 3, 0, 1)), self.field())

    def test_vectorized_over_draws(self):
        coords, spacing = regular_grid(Region(0, 1), 8)
        vals = np.arange(16.0).reshape(2, 8)
        out = evaluate_functional_on_sample(CellAverage(Region(0, 1)),
                                            SampledField(coords, vals, spacing))
        np.testing.assert_allclose(out, [3.5, 11.5])

    def test_gauss_grid_weights_integrate_exactly(self):
        coords, w, _ = gauss_grid(Region(0, 1, 0, 2), (4, 4))
        f = SampledField(coords, coords[:, 0] ** 3 * coords[:, 1] ** 2, node_weights=w,
                         spacing=np.array([0.5, 1.0]))
        v = evaluate_functional_on_sample(CellAverage(Region(0, 1, 0, 2)), f)
        assert v == pytest.approx(0.25 * 8 / 3 / 2, rel=1e-12)

    def test_weighted_sum_validation(self):
        with pytest.raises(ParameterDomainError):
            WeightedSum(((0.0,), (1.0,)), (1.0,))
        with pytest.raises(ParameterDomainError):
            WeightedSum(((0.0,), (1.0,)), (1.0, -1.0))
