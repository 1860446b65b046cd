"""Husler-Reiss distributions with standard Gumbel margins.

``V(x) = E max_j exp(-x_j + Y_j - var(Y_j)/2)`` for a centred Gaussian ``Y``
with variogram matrix ``Gamma``. Coordinates equal to +inf drop out of the
maximum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DependenceDegeneracyError, InvalidGammaError, NonPSDCovarianceError
from .mvn import (  # noqa: F401
    MvnResult, cholesky_psd, genz_batch, lattice_points, mvn_cdf, prioritize, priority_order)

DEGENERATE_GAMMA = 1e-10


@dataclass(frozen=True)
class HRModel:
    gamma: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.gamma, float)
        check_gamma(G)
        object.__setattr__(self, "gamma", G)

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]


@dataclass(frozen=True)
class MCEstimate:
    value: float
    se: float


def check_gamma(G: np.ndarray, rtol: float = 1e-8):
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidGammaError("variogram matrix must be square")
    if G.shape[0] < 1:
        raise InvalidGammaError("empty variogram matrix")
    if not np.all(np.isfinite(G)):
        raise InvalidGammaError("variogram matrix has non-finite entries")
    scale = max(np.abs(G).max(), 1.0)
    if np.abs(G - G.T).max() > rtol * scale:
        raise InvalidGammaError("variogram matrix is not symmetric")
    if np.abs(np.diag(G)).max() > rtol * scale:
        raise InvalidGammaError("variogram matrix must have a zero diagonal")
    if G.min() < -rtol * scale:
        raise InvalidGammaError("variogram entries must be nonnegative")


def sigma_from_gamma(G, anchor: int = 0, rtol: float = 1e-10) -> np.ndarray:
    """Covariance of ``Y_j - Y_anchor`` over the non-anchor coordinates.

    Entry (j, k) is ``(G[j, a] + G[k, a] - G[j, k]) / 2``; ``anchor`` is a
    0-based index.
    """
    G = np.asarray(G, float)
    m = G.shape[0]
    if not 0 <= anchor < m:
        raise IndexError(f"anchor {anchor} out of range for dimension {m}")
    S = anchored_covariance(G, anchor)
    keep = np.arange(m) != anchor
    S = S[np.ix_(keep, keep)]
    if S.size:
        ev = np.linalg.eigvalsh(S)
        if ev[0] < -rtol * max(ev[-1], 1.0):
            raise InvalidGammaError(
                f"variogram matrix is not conditionally negative definite (eigenvalue {ev[0]:.3g})")
    return S


def anchored_covariance(G, anchor: int) -> np.ndarray:
    """Full m x m covariance with a zero row/column at ``anchor``."""
    G = np.asarray(G, float)
    ga = G[:, anchor]
    return 0.5 * (ga[:, None] + ga[None, :] - G)


def _v2(x1, x2, g):
    """Bivariate exponent measure in closed form (vectorized)."""
    x1, x2, g = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float),
                                    np.asarray(g, float))
    out = np.empty(x1.shape)
    inf1, inf2 = np.isposinf(x1), np.isposinf(x2)
    dep = g <= 0
    both = inf1 & inf2
    out[both] = 0.0
    m = inf1 & ~inf2
    out[m] = np.exp(-x2[m])
    m = inf2 & ~inf1
    out[m] = np.exp(-x1[m])
    fin = ~inf1 & ~inf2
    m = fin & dep
    out[m] = np.exp(-np.minimum(x1[m], x2[m]))
    m = fin & ~dep
    r = np.sqrt(g[m])
    d = x2[m] - x1[m]
    out[m] = np.exp(-x1[m]) * ndtr(r / 2 + d / r) + np.exp(-x2[m]) * ndtr(r / 2 - d / r)
    return out


def exponent_measure_V(x, gamma, n_mc: int = 100_000, seed=0) -> MCEstimate:
    """Exponent measure at ``x``.

    Bivariate: closed form (``se = 0``). Higher dimensions: Monte Carlo over
    the Gaussian vector anchored at the first finite coordinate, with
    antithetic pairs. ``seed`` may be an int or a numpy Generator.
    """
    x = np.asarray(x, float)
    G = gamma.gamma if isinstance(gamma, HRModel) else np.asarray(gamma, float)
    m = x.size
    if G.shape != (m, m):
        raise InvalidGammaError("dimension of x and Gamma differ")
    check_gamma(G)
    fin = np.flatnonzero(~np.isposinf(x))
    if fin.size == 0:
        return MCEstimate(0.0, 0.0)
    if np.any(np.isneginf(x)):
        return MCEstimate(np.inf, 0.0)
    if fin.size == 1:
        return MCEstimate(float(np.exp(-x[fin[0]])), 0.0)
    x = x[fin]
    G = G[np.ix_(fin, fin)]
    if fin.size == 2:
        return MCEstimate(float(_v2(x[0], x[1], G[0, 1])), 0.0)
    S = sigma_from_gamma(G, 0)
    L = cholesky_psd(S)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    half = max(n_mc // 2, 1)
    z = rng.standard_normal((half, S.shape[0]))
    vals = []
    for sign in (1.0, -1.0):
        Y = np.zeros((half, fin.size))
        Y[:, 1:] = sign * z @ L.T
        vals.append(np.exp(-x[None, :] + Y - 0.5 * G[0][None, :]).max(axis=1))
    pair = 0.5 * (vals[0] + vals[1])
    return MCEstimate(float(pair.mean()), float(pair.std(ddof=1) / np.sqrt(half)))


def exponent_measure(x, gamma, n_points: int = 2048, n_shifts: int = 8, seed: int = 0) -> float:
    """Exponent measure via Euler's identity ``V = -sum_j dV/dx_j``.

    Each term is a censored partial derivative with a single exceeding
    coordinate, so this is a sum of (m-1)-variate normal CDFs evaluated by
    QMC on a fixed point set.
    """
    x = np.asarray(x, float)
    G = gamma.gamma if isinstance(gamma, HRModel) else np.asarray(gamma, float)
    fin = np.flatnonzero(~np.isposinf(x))
    if fin.size <= 2:
        return exponent_measure_V(x, G).value
    x = x[fin]
    G = G[np.ix_(fin, fin)]
    m = x.size
    pts = lattice_points(m - 1, n_points, n_shifts, seed)
    upper, chol, scale = [], [], []
    for j in range(m):
        upper_j, chol_j, scale_j = _censored_terms(x, G, [j])
        upper.append(upper_j)
        chol.append(chol_j)
        scale.append(np.exp(scale_j))
    probs = genz_batch(np.array(upper), np.array(chol), pts).mean(axis=1)
    return float(np.dot(scale, probs))


def _reorder(m, exceed):
    exceed = list(exceed)
    rest = [j for j in range(m) if j not in exceed]
    return np.array(exceed + rest)


def _censored_terms(z, G, exceed, orders: dict | None = None, key=None):
    """Pieces of the censored derivative for one exceedance set.

    Returns (upper limits, Cholesky factor, log prefactor): the censored
    derivative is ``exp(log_pre) * P(N(0, chol chol') <= upper)``. Shared by
    the single-event function and the batched likelihood. With a dict
    ``orders`` the integration order is looked up under ``key`` and stored
    on first use, so repeated evaluations share it.
    """
    z = np.asarray(z, float)
    m = z.size
    order = _reorder(m, exceed)
    b = len(exceed)
    zz = z[order]
    GG = G[np.ix_(order, order)]
    zt = zz - zz[0] + GG[0] / 2.0
    S = anchored_covariance(GG, 0)[1:, 1:]
    log_pre = -zz[0]
    if b > 1:
        S22 = S[:b - 1, :b - 1]
        try:
            C22 = np.linalg.cholesky(S22)
        except np.linalg.LinAlgError:
            raise DependenceDegeneracyError(
                "exceeding coordinates are completely dependent") from None
        v = np.linalg.solve(C22, zt[1:b])
        logdet = 2.0 * np.log(np.diag(C22)).sum()
        log_pre += -0.5 * v @ v - 0.5 * logdet - 0.5 * (b - 1) * np.log(2 * np.pi)
        if b == m:
            return np.zeros(0), np.zeros((0, 0)), log_pre
        S12 = S[b - 1:, :b - 1]
        K = np.linalg.solve(C22, S12.T)  # C22^{-1} S21
        mu_c = zt[b:] - K.T @ v
        S_c = S[b - 1:, b - 1:] - K.T @ K
    else:
        mu_c = zt[1:]
        S_c = S
    if orders is None:
        mu_c, S_c = prioritize(mu_c, S_c)
    else:
        if key not in orders:
            orders[key] = priority_order(mu_c, S_c)
        mu_c, S_c = prioritize(mu_c, S_c, orders[key])
    try:
        chol = cholesky_psd(S_c)
    except NonPSDCovarianceError as exc:
        raise InvalidGammaError(str(exc)) from None
    return mu_c, chol, log_pre


def censored_partial_V(z, exceed, gamma, n_points: int = 4096, n_shifts: int = 10,
                       seed: int = 0, tol: float | None = None) -> float:
    """``(-1) * dV/dz_K`` for the exceedance set ``K`` (0-based indices).

    Product of the anchored exponential, the Gaussian density of the other
    exceeding coordinates and the conditional normal CDF of the censored
    ones. With ``tol`` set, the CDF part goes through the adaptive
    ``mvn_cdf``; otherwise a fixed lattice is used.
    """
    z = np.asarray(z, float)
    G = gamma.gamma if isinstance(gamma, HRModel) else np.asarray(gamma, float)
    exceed = [int(k) for k in exceed]
    if not exceed:
        raise ValueError("exceedance set must be non-empty")
    if len(set(exceed)) != len(exceed):
        raise ValueError("duplicate indices in the exceedance set")
    ex = np.array(exceed)
    if len(ex) > 1:
        sub = G[np.ix_(ex, ex)]
        off = sub[~np.eye(len(ex), dtype=bool)]
        if np.any(off < DEGENERATE_GAMMA):
            raise DependenceDegeneracyError(
                "exceeding coordinates with (near) zero variogram must be merged upstream")
    upper, chol, log_pre = _censored_terms(z, G, exceed)
    pre = np.exp(log_pre)
    d = upper.size
    if d == 0:
        return float(pre)
    if d == 1:
        return float(pre * ndtr(upper[0] / max(chol[0, 0], 1e-300)))
    if tol is not None:
        return float(pre * mvn_cdf(upper, chol @ chol.T, tol=tol, seed=seed).value)
    pts = lattice_points(d, n_points, n_shifts, seed)
    return float(pre * genz_batch(upper[None], chol[None], pts).mean())


def chi_pair(gamma_jk) -> np.ndarray | float:
    """Bivariate tail dependence coefficient ``2 (1 - Phi(sqrt(Gamma) / 2))``."""
    g = np.asarray(gamma_jk, float)
    if np.any(g < 0):
        raise InvalidGammaError("variogram value must be nonnegative")
    out = 2.0 * (1.0 - ndtr(np.sqrt(g) / 2.0))
    return float(out) if out.ndim == 0 else out
