import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aggextremes.aggregation import CellAverage, CovariateBasis, PointEval, Region
from aggextremes.errors import (
    IdentifiabilityError,
    InvalidConfigurationError,
    ParameterDomainError,
)
from aggextremes.fit import (
    AggregationScheme,
    ExceedanceData,
    FitResult,
    ModelParams,
    QmcSettings,
    censored_loglik,
    exponent_measure_qmc,
    fit_censored,
    fit_least_squares,
    jackknife,
    model_mu_sigma,
)
from aggextremes.hr_core import _v2
from aggextremes.simulate import sample_model
from aggextremes.variogram import VariogramParams

VP = VariogramParams(alpha=1.0, lam=2.0)


def cells(g):
    return [CellAverage(Region(i, i + 1, j, j + 1)) for i in range(g) for j in range(g)]


@pytest.fixture(scope="module")
def linear_scheme():
    bA = CovariateBasis.coordinates(["a0", "a1"], [0])
    bB = CovariateBasis.coordinates(["b0", "b2"], [1])
    fs = cells(3) + [CellAverage(Region(0, 2, 0, 2)), CellAverage(Region(0, 3, 0, 3))]
    return AggregationScheme(fs, bA, bB, dependence=False)


@pytest.fixture(scope="module")
def pair_scheme():
    return AggregationScheme([PointEval((0.0, 0.0)), PointEval((1.0, 0.0))])


class TestParams:
    def test_scale_positive(self):
        with pytest.raises(ParameterDomainError):
            ModelParams(0.0, 1.0, [1.0], [0.0])

    def test_json_round_trip(self, linear_scheme):
        p = linear_scheme.normalize(ModelParams(1.2, 3.0, [0.8, 0.4], [-0.4, 0.8], VP))
        res = FitResult(p, linear_scheme.names, 0.0, True, 1, 1, "x")
        assert FitResult.params_from_json(res.to_json()) == p
        assert set(json.loads(res.to_json())["estimate"]) == {
            "a_n", "b_n", "a0", "a1", "b0", "b2", "alpha", "lambda", "eta", "a"}


class TestScheme:
    def test_normalize_constraints(self, linear_scheme):
        p = linear_scheme.normalize(ModelParams(1.2, 3.0, [0.8, 0.4], [5.0, 0.8], VP))
        assert linear_scheme.ell_A(p)[0] == pytest.approx(1.0)
        assert linear_scheme.ell_B(p)[0] == pytest.approx(0.0, abs=1e-14)

    def test_normalize_keeps_margins_of_A_rescaling(self, linear_scheme):
        p = ModelParams(1.2, 3.0, [0.8, 0.4], [-0.4, 0.8], VP)
        mu0, s0 = model_mu_sigma(p, linear_scheme)
        mu1, s1 = model_mu_sigma(linear_scheme.normalize(p), linear_scheme)
        np.testing.assert_allclose(s1, s0, rtol=1e-12)
        # B intercept moves every location by the same amount
        d = mu1 - mu0
        np.testing.assert_allclose(d, d[0], atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-1, 1), st.floats(-3, 3), st.floats(-0.2, 0.3), st.floats(-2, 2),
           st.floats(0.2, 1.9), st.floats(0.3, 5))
    def test_vector_round_trip(self, la, b, a1, b2, alpha, lam):
        s = AggregationScheme(cells(2), CovariateBasis.coordinates(["a0", "a1"], [0]),
                              CovariateBasis.coordinates(["b0", "b2"], [1]), dependence=False)
        p = s.normalize(ModelParams(np.exp(la), b, [1.0, a1], [0.0, b2],
                                    VariogramParams(alpha, lam)))
        q = s.from_vector(s.to_vector(p), p)
        np.testing.assert_allclose(s.to_vector(q), s.to_vector(p), atol=1e-12)
        assert q.variogram.alpha == pytest.approx(alpha, rel=1e-12)
        assert q.variogram.lam == pytest.approx(lam, rel=1e-12)

    def test_point_functional_margins(self, pair_scheme):
        # constant A and B at a point: theta = 1
        p = ModelParams(0.7, 2.0, [1.0], [0.0], VP)
        mu, sig = model_mu_sigma(p, pair_scheme)
        np.testing.assert_allclose(mu, 2.0, atol=1e-12)
        np.testing.assert_allclose(sig, 0.7)

    def test_negative_A_rejected(self, linear_scheme):
        p = ModelParams(1.0, 0.0, [1.0, -1.0], [0.0, 0.0], VP)
        with pytest.raises(ParameterDomainError):
            model_mu_sigma(p, linear_scheme)

    def test_unknown_variogram_field(self):
        with pytest.raises(ParameterDomainError):
            AggregationScheme(cells(1), free_variogram=("nugget",))

    def test_free_names(self, linear_scheme):
        assert linear_scheme.free_names == ["a_n", "b_n", "a1", "b2", "alpha", "lambda"]


class TestLeastSquares:
    def test_recovers_exact_margins(self, linear_scheme):
        truth = linear_scheme.normalize(ModelParams(1.1, 2.5, [0.8, 0.4], [-0.4, 0.8], VP))
        mu, sig = model_mu_sigma(truth, linear_scheme)
        init = ModelParams(1.0, 2.0, [1.0, 0.0], [0.0, 0.0], VariogramParams(1.0, 1.0))
        res = fit_least_squares(mu, sig, linear_scheme, init, seed=1)
        assert res.converged and res.identifiable
        assert res.objective < 1e-16
        got, want = res.as_dict(), res.names_to_values(truth)
        for k in ("a_n", "b_n", "a1", "b2", "alpha", "lambda"):
            assert got[k] == pytest.approx(want[k], rel=1e-5, abs=1e-6)

    def test_flat_direction_flagged(self):
        # a single cell and its sub-cells cannot separate alpha and lambda here
        s = AggregationScheme([CellAverage(Region(0, 1, 0, 1)),
                               CellAverage(Region(0, 1, 0, 1))], dependence=False)
        p = ModelParams(1.0, 0.0, [1.0], [0.0], VP)
        mu, sig = model_mu_sigma(p, s)
        res = fit_least_squares(mu, sig, s, p)
        assert not res.identifiable

    def test_too_few_summaries(self):
        s = AggregationScheme(cells(1), dependence=False)
        with pytest.raises(IdentifiabilityError):
            fit_least_squares([1.0], [1.0], s, ModelParams(1.0, 0.0, [1.0], [0.0], VP))

    def test_bad_weights(self, linear_scheme):
        p = ModelParams(1.0, 0.0, [1.0, 0.0], [0.0, 0.0], VP)
        L = linear_scheme.L
        with pytest.raises(ParameterDomainError):
            fit_least_squares(np.ones(L), np.ones(L), linear_scheme, p, v=-np.ones(L))


def reference_loglik(p, scheme, data, t, h=1e-4):
    """Bivariate censored likelihood from the closed-form exponent measure."""
    mu, sig = model_mu_sigma(p, scheme)
    g = scheme.gamma(p)[0, 1]
    ut = (data.u - mu) / sig
    V = lambda a, b: float(_v2(a, b, g))
    ll = (data.n - len(data.values)) * np.log1p(-V(*ut) / t)
    for row in data.values:
        z = np.where(row > data.u, (row - mu) / sig, ut)
        e = row > data.u
        if e.all():
            d = (V(z[0] + h, z[1] + h) - V(z[0] + h, z[1] - h) - V(z[0] - h, z[1] + h)
                 + V(z[0] - h, z[1] - h)) / (4 * h * h)
        elif e[0]:
            d = (V(z[0] + h, z[1]) - V(z[0] - h, z[1])) / (2 * h)
        else:
            d = (V(z[0], z[1] + h) - V(z[0], z[1] - h)) / (2 * h)
        ll += np.log(abs(d)) - np.log(t) - np.log(sig[e]).sum()
    return ll


class TestCensoredLikelihood:
    def test_bivariate_matches_closed_form(self, pair_scheme):
        p = ModelParams(0.7, 2.0, [1.0], [0.0], VP)
        u = np.array([2.5, 2.4])
        rows = np.array([[3.0, 1.0], [2.0, 3.2], [3.5, 2.9]])
        data = ExceedanceData(rows, 200, u)
        got = censored_loglik(p, pair_scheme, data, 100.0)
        assert got == pytest.approx(reference_loglik(p, pair_scheme, data, 100.0), abs=1e-5)

    def test_exponent_measure_bivariate(self):
        G = np.array([[0.0, 1.5], [1.5, 0.0]])
        x = np.array([0.3, -0.2])
        assert exponent_measure_qmc(x, G) == pytest.approx(float(_v2(*x, 1.5)), rel=1e-10)

    def test_thresholds_too_low(self, pair_scheme):
        p = ModelParams(0.7, 2.0, [1.0], [0.0], VP)
        data = ExceedanceData(np.array([[3.0, 1.0]]), 10, np.array([-5.0, -5.0]))
        with pytest.raises(InvalidConfigurationError):
            censored_loglik(p, pair_scheme, data, 2.0)

    def test_data_validation(self):
        with pytest.raises(ParameterDomainError):
            ExceedanceData(np.array([[0.0, 0.0]]), 10, np.array([1.0, 1.0]))
        with pytest.raises(ParameterDomainError):
            ExceedanceData(np.array([[2.0, 0.0]]), 0, np.array([1.0, 1.0]))

    def test_drop_reduces_count(self):
        X = np.array([[2.0, 0.0], [0.0, 0.0], [0.0, 3.0], [5.0, 5.0]])
        d = ExceedanceData.from_matrix(X, [1.0, 1.0])
        assert list(d.rows) == [0, 2, 3] and d.n == 4
        e = d.drop([1])
        assert list(e.rows) == [0, 3] and e.n == 3


class TestFitCensored:
    @pytest.fixture(scope="class")
    @staticmethod
    def setting():
        s = AggregationScheme([PointEval((0.0, 0.0)), PointEval((1.0, 0.0)),
                               PointEval((0.0, 2.0))], free_variogram=("lam",))
        truth = ModelParams(1.0, 0.0, [1.0], [0.0], VariogramParams(1.0, 1.5))
        n = 3000
        X = sample_model(truth, s, n, n, seed=3)
        u = np.quantile(X, 0.97, axis=0)
        return s, truth, ExceedanceData.from_matrix(X, u), n

    def test_improves_on_truth(self, setting):
        s, truth, data, n = setting
        qmc = QmcSettings(256)
        init = ModelParams(1.3, 0.5, [1.0], [0.0], VariogramParams(1.0, 3.0))
        res = fit_censored(data, s, n, init, qmc, max_evals=600)
        assert res.converged
        assert res.objective >= censored_loglik(truth, s, data, n, qmc) - 1e-6
        est = res.as_dict()
        assert abs(est["a_n"] - 1.0) < 0.25
        assert abs(est["lambda"] - 1.5) < 0.75

    def test_smooth_alpha_start_moved_inside(self):
        pts = [PointEval((0.0, 0.0)), PointEval((1.0, 0.0)), PointEval((0.0, 1.0)),
               PointEval((1.0, 1.0))]
        s = AggregationScheme(pts, free_variogram=("alpha",))
        truth = ModelParams(1.0, 0.0, [1.0], [0.0], VariogramParams(1.0, 1.5))
        X = sample_model(truth, s, 2000, 2000, seed=3)
        data = ExceedanceData.from_matrix(X, np.quantile(X, 0.97, axis=0))
        init = ModelParams(1.0, 0.0, [1.0], [0.0], VariogramParams(2.0, 1.5))
        qmc = QmcSettings(128)
        with pytest.raises(Exception):
            censored_loglik(init, s, data, 2000, qmc)
        res = fit_censored(data, s, 2000, init, qmc, max_evals=200)
        assert res.converged
        assert res.as_dict()["alpha"] < 1.9

    def test_optimizer_choice(self, setting):
        s, truth, data, n = setting
        with pytest.raises(ParameterDomainError):
            fit_censored(data, s, n, truth, method="newton")

    def test_single_functional_dependence(self):
        s = AggregationScheme([PointEval((0.0, 0.0))])
        data = ExceedanceData(np.array([[3.0]]), 100, np.array([2.0]))
        with pytest.raises(IdentifiabilityError):
            fit_censored(data, s, 100, ModelParams(1.0, 0.0, [1.0], [0.0], VP))


class TestJackknife:
    def test_mean_matches_textbook_formula(self):
        x = np.random.default_rng(0).normal(size=40)
        names = {"A": ["a0"], "B": ["b0"]}

        def fit_fn(drop):
            keep = np.setdiff1d(np.arange(x.size), drop)
            p = ModelParams(1.0, x[keep].mean(), [1.0], [0.0], VP)
            return FitResult(p, names, 0.0, True, 0, 0, "mean")

        jk = jackknife(fit_fn, x.size, 40, 1)
        assert jk.sd["b_n"] == pytest.approx(x.std(ddof=1) / np.sqrt(x.size), rel=1e-12)
        assert jk.sd["a_n"] == 0.0 and jk.n_failed == 0

    def test_failures_counted(self):
        names = {"A": ["a0"], "B": ["b0"]}

        def fit_fn(drop):
            p = ModelParams(1.0, float(drop[0]), [1.0], [0.0], VP)
            return FitResult(p, names, 0.0, drop[0] % 2 == 0, 0, 0, "x")

        jk = jackknife(fit_fn, 10, 10, 1)
        assert jk.n_failed == 5 and len(jk.estimates) == 5

    def test_block_validation(self):
        with pytest.raises(ParameterDomainError):
            jackknife(lambda d: None, 10, 1, 5)
        with pytest.raises(ParameterDomainError):
            jackknife(lambda d: None, 10, 4, 3)
