import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aggextremes.errors import ParameterDomainError
from aggextremes.variogram import (
    VariogramParams,
    anisotropy_matrix,
    covariance_matrix,
    gamma,
    gaussian_cov,
)

alphas = st.floats(0.05, 2.0)
lams = st.floats(0.1, 10.0)
coords = st.floats(-5, 5)


class TestGamma:
    def test_zero_lag(self):
        assert gamma([0.0, 0.0], VariogramParams(1.5, 2.0, 0.3, 1.4)) == 0.0

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
    def test_unit_lag_equals_one(self, alpha):
        assert gamma([2.0, 0.0], VariogramParams(alpha, 2.0)) == pytest.approx(1.0)

    def test_one_dimensional(self):
        assert gamma([-3.0], VariogramParams(1.0, 1.5)) == pytest.approx(2.0)

    def test_isotropic_uses_distance(self):
        p = VariogramParams(1.0, 1.0)
        assert gamma([3.0, 4.0], p) == pytest.approx(5.0)

    def test_anisotropy_stretches_rotated_axis(self):
        p = VariogramParams(1.0, 1.0, 0.0, 2.0)
        assert gamma([0.0, 1.0], p) == pytest.approx(2.0)
        assert gamma([1.0, 0.0], p) == pytest.approx(1.0)

    def test_three_dimensional_lag_rejected(self):
        with pytest.raises(ParameterDomainError):
            gamma([1.0, 1.0, 1.0], VariogramParams())

    @given(alphas, lams, coords, coords)
    def test_symmetric_and_nonnegative(self, a, lam, x, y):
        p = VariogramParams(a, lam, 0.4, 1.3)
        g1 = gamma([x, y], p)
        assert g1 >= 0
        assert g1 == pytest.approx(gamma([-x, -y], p))

    @given(alphas, st.floats(0.1, 4.0), coords, coords)
    def test_homogeneity(self, a, c, x, y):
        p = VariogramParams(a, 1.0)
        assert gamma([c * x, c * y], p) == pytest.approx(c ** a * gamma([x, y], p), rel=1e-9,
                                                         abs=1e-12)


class TestParams:
    @pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(alpha=2.1), dict(lam=0.0),
                                    dict(eta=-np.pi / 2), dict(aniso=0.9),
                                    dict(alpha=np.nan)])
    def test_domain(self, kw):
        with pytest.raises(ParameterDomainError):
            VariogramParams(**kw)

    def test_replace(self):
        p = VariogramParams(1.0, 2.0).replace(alpha=0.5)
        assert (p.alpha, p.lam) == (0.5, 2.0)

    def test_anisotropy_matrix_identity(self):
        np.testing.assert_allclose(anisotropy_matrix(0.0, 1.0), np.eye(2))

    def test_anisotropy_matrix_determinant(self):
        assert np.linalg.det(anisotropy_matrix(0.7, 1.8)) == pytest.approx(1.8)


class TestCovariance:
    def test_pinned_at_origin(self):
        p = VariogramParams(1.2, 1.0)
        assert gaussian_cov([0.0, 0.0], [1.0, 2.0], p) == pytest.approx(0.0)

    def test_variance_is_variogram_to_origin(self):
        p = VariogramParams(1.2, 1.0)
        s = np.array([1.0, 2.0])
        assert gaussian_cov(s, s, p) == pytest.approx(gamma(s, p))

    def test_variogram_recovered(self):
        p = VariogramParams(1.5, 0.7, 0.2, 1.5)
        pts = np.random.default_rng(1).normal(size=(6, 2))
        C = covariance_matrix(pts, p)
        G = np.diag(C)[:, None] + np.diag(C)[None, :] - 2 * C
        np.testing.assert_allclose(G, gamma(pts[:, None] - pts[None], p), atol=1e-12)

    @settings(max_examples=25)
    @given(alphas, st.integers(0, 10_000))
    def test_positive_semidefinite(self, a, seed):
        pts = np.random.default_rng(seed).uniform(-3, 3, size=(8, 2))
        C = covariance_matrix(pts, VariogramParams(a, 1.3, 0.5, 1.2), origin=[0.1, -0.2])
        assert np.linalg.eigvalsh(C).min() > -1e-8 * max(1.0, np.abs(C).max())
