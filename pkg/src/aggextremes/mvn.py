"""Multivariate normal orthant probabilities by randomized quasi-Monte Carlo.

Genz's separation-of-variables transform on randomly shifted Richtmyer
lattices with the baker's (tent) periodization. The batched kernel evaluates
many integrals of the same (padded) dimension against one shared point set,
which is what the censored likelihood needs: fixed points give a smooth,
deterministic objective.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import NonPSDCovarianceError

_PRIMES = np.array([2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67,
                    71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149])
_EPS = 1e-15


@dataclass(frozen=True)
class MvnResult:
    value: float
    error: float
    converged: bool


@lru_cache(maxsize=64)
def lattice_points(dim: int, n_points: int, n_shifts: int, seed: int = 0) -> np.ndarray:
    """Shifted, tent-transformed Richtmyer points of shape (n_shifts, n_points, dim)."""
    if dim > len(_PRIMES):
        raise ValueError(f"dimension {dim} exceeds the supported maximum {len(_PRIMES)}")
    q = np.sqrt(_PRIMES[:max(dim, 1)])
    k = np.arange(1, n_points + 1)[:, None]
    base = np.mod(k * q[None, :], 1.0)
    shifts = np.random.default_rng(seed).random((n_shifts, 1, max(dim, 1)))
    pts = np.abs(2.0 * np.mod(base[None] + shifts, 1.0) - 1.0)
    pts.setflags(write=False)
    return pts


def cholesky_psd(cov: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Lower Cholesky factor tolerating semidefinite (rank deficient) input.

    Batched over leading axes. Raises NonPSDCovarianceError when an
    eigenvalue is below ``-rtol * largest``.
    """
    cov = np.asarray(cov, float)
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    n = cov.shape[-1]
    if n == 0:
        return cov.copy()
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    ev = np.linalg.eigvalsh(cov)
    top = np.maximum(ev[..., -1:], 0.0)
    if np.any(ev < -rtol * np.maximum(top, 1e-300) - 1e-300):
        raise NonPSDCovarianceError("covariance matrix is not positive semidefinite")
    # pivot-free factor of the PSD matrix: add a vanishing ridge
    ridge = (np.maximum(top[..., 0], 1.0) * 1e-13)[..., None, None] * np.eye(n)
    return np.linalg.cholesky(cov + ridge)


def priority_order(upper: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Permutation putting the tightest standardized limits first."""
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        key = np.where(sd > 0, upper / np.where(sd > 0, sd, 1.0), np.where(upper >= 0, np.inf, -np.inf))
    return np.argsort(key, kind="stable")


def prioritize(upper: np.ndarray, cov: np.ndarray, order: np.ndarray | None = None):
    """Reorder so that the tightest standardized limits are integrated first.

    A static version of the Genz-Bretz variable ordering; it leaves the
    probability unchanged and usually cuts the QMC variance severalfold.
    Passing a fixed ``order`` keeps QMC estimates smooth in the inputs.
    """
    if order is None:
        order = priority_order(upper, cov)
    return upper[order], cov[np.ix_(order, order)]


def genz_batch(upper: np.ndarray, chol: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Integrand means for P(X <= upper) with X = chol @ Z.

    ``upper`` (B, d), ``chol`` (B, d, d) lower triangular, ``points``
    (R, N, d) in the unit cube. Returns (B, R) means, one per shift. Entries
    of ``upper`` may be +inf (the coordinate is then integrated out).
    """
    B, d = upper.shape
    R, N = points.shape[:2]
    if d == 0:
        return np.ones((B, R))
    diag = np.einsum("bii->bi", chol)
    diag = np.where(diag > 1e-12, diag, 1e-12)
    y = np.zeros((B, R, N, d))
    e = ndtr(upper[:, 0] / diag[:, 0])[:, None, None] * np.ones((1, R, N))
    f = e.copy()
    for i in range(1, d):
        w = points[None, :, :, i - 1]
        y[..., i - 1] = ndtri(np.clip(w * e, _EPS, 1.0 - _EPS))
        s = np.einsum("brnk,bk->brn", y[..., :i], chol[:, i, :i])
        e = ndtr((upper[:, i, None, None] - s) / diag[:, i, None, None])
        f *= e
    return f.mean(axis=-1)


def mvn_cdf(upper, cov, mean=None, tol: float = 1e-4, n_shifts: int = 20,
            max_points: int = 200_000, seed: int = 0) -> MvnResult:
    """P(X <= upper) for X ~ N(mean, cov) with a randomized-QMC error estimate.

    The reported error is 3 standard errors across the random shifts. The
    lattice size doubles until the error is below ``tol`` or ``max_points``
    is reached, in which case ``converged`` is False.
    """
    upper = np.atleast_1d(np.asarray(upper, float))
    cov = np.atleast_2d(np.asarray(cov, float))
    d = upper.size
    if cov.shape != (d, d):
        raise ValueError("covariance shape does not match the limits")
    if d > 25:
        raise ValueError("dimension above 25 is not supported")
    if tol < 1e-6:
        raise ValueError("tolerance below 1e-6 is not supported")
    if mean is not None:
        upper = upper - np.asarray(mean, float)
    if np.any(upper == -np.inf):
        return MvnResult(0.0, 0.0, True)
    upper, cov = prioritize(upper, cov)
    chol = cholesky_psd(cov)
    if d == 1:
        return MvnResult(float(ndtr(upper[0] / max(chol[0, 0], 1e-300))), 0.0, True)
    n = 256
    while True:
        pts = lattice_points(d, n, n_shifts, seed)
        vals = np.array([genz_batch(upper[None], chol[None], pts[r:r + 1])[0, 0]
                         for r in range(n_shifts)])
        err = 3.0 * vals.std(ddof=1) / np.sqrt(n_shifts)
        if err <= tol or 2 * n > max_points:
            return MvnResult(float(vals.mean()), float(err), bool(err <= tol))
        n *= 2
