"""Gumbel marginal estimation for a single aggregated series.

Two estimators at a level ``t``: the Gumbel likelihood of block maxima over
blocks of length ``t``, and the censored likelihood of exceedances of a
threshold ``u`` under ``P(X > x) ~ exp(-(x - mu) / sigma) / t``. Estimates at
different levels are linked through the location of the maximum of the
whole series, ``mu_t + sigma * log(n / t)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateDataError, EmptyExceedanceError, ParameterDomainError

MIN_EXCEEDANCES = 10


@dataclass(frozen=True)
class GumbelParams:
    mu: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "sigma", float(self.sigma))
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma)):
            raise ParameterDomainError("Gumbel parameters must be finite")
        if self.sigma <= 0:
            raise ParameterDomainError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class MarginEstimate:
    """Fitted Gumbel parameters at level ``t``.

    ``method`` is ``"block_maxima"`` or ``"censored_pot"``; ``setting`` holds
    the block size or threshold. ``cov`` is the inverse observed information
    for ``(mu, sigma)``; ``n`` is the length of the underlying series.
    """

    params: GumbelParams
    t: float
    method: str
    setting: float
    n: int
    cov: np.ndarray
    loglik: float
    converged: bool

    def __post_init__(self):
        if not self.t > 1:
            raise ParameterDomainError(f"level t must exceed 1, got {self.t}")

    @property
    def mu(self) -> float:
        return self.params.mu

    @property
    def sigma(self) -> float:
        return self.params.sigma

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def gumbel_loglik(maxima, mu: float, sigma: float) -> float:
    z = (np.asarray(maxima, float) - mu) / sigma
    return float(-z.size * np.log(sigma) - np.sum(z + np.exp(-z)))


def _gumbel_grad(maxima, mu, sigma):
    z = (maxima - mu) / sigma
    e = np.exp(-z)
    return np.array([np.sum(1.0 - e) / sigma, (-z.size + np.sum(z * (1.0 - e))) / sigma])


def censored_gumbel_loglik(x, u: float, t: float, mu: float, sigma: float) -> float:
    """Censored Gumbel log-likelihood of a series at threshold ``u`` and level ``t``."""
    x = np.asarray(x, float)
    exc = x[x > u]
    n, k = x.size, exc.size
    q = np.exp(-(u - mu) / sigma) / t
    if q >= 1:
        return -np.inf
    return float((n - k) * np.log1p(-q) - k * np.log(sigma) - np.sum(exc - mu) / sigma)


def _censored_grad(n, exc, u, t, mu, sigma):
    k = exc.size
    ut = (u - mu) / sigma
    q = np.exp(-ut) / t
    r = (n - k) * q / (1.0 - q)
    return np.array([(-r + k) / sigma,
                     (-r * ut - k + np.sum(exc - mu) / sigma) / sigma])


def _numeric_hessian(grad: Callable, x: np.ndarray) -> np.ndarray:
    H = np.empty((2, 2))
    for i in range(2):
        h = 1e-5 * max(abs(x[i]), 1.0)
        e = np.zeros(2)
        e[i] = h
        H[:, i] = (grad(x + e) - grad(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def _maximize(loglik: Callable, grad: Callable, x0, scale: float):
    """Nelder-Mead on (mu, log sigma), then Newton steps on the gradient."""
    def obj(v):
        val = loglik(v[0], np.exp(v[1]))
        return -val if np.isfinite(val) else 1e300

    res = minimize(obj, [x0[0], np.log(x0[1])], method="Nelder-Mead",
                   options=dict(xatol=1e-10, fatol=1e-12, maxiter=4000))
    x = np.array([res.x[0], np.exp(res.x[1])])
    g = lambda v: grad(v[0], v[1])
    converged = False
    for _ in range(50):
        gr = g(x)
        if np.max(np.abs(gr)) * scale < 1e-8:
            converged = True
            break
        H = _numeric_hessian(g, x)
        try:
            step = np.linalg.solve(H, gr)
        except np.linalg.LinAlgError:
            break
        # backtrack to keep sigma positive and the likelihood increasing
        lam, base = 1.0, loglik(*x)
        while lam > 1e-8:
            cand = x - lam * step
            if cand[1] > 0 and loglik(*cand) >= base - 1e-12 * abs(base):
                x = cand
                break
            lam /= 2
        else:
            break
    if not converged:
        converged = np.max(np.abs(g(x))) * scale < 1e-6
    H = _numeric_hessian(g, x)
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.nan)
    return x, cov, loglik(*x), bool(converged)


def fit_block_maxima(series, block_size: int) -> MarginEstimate:
    """Gumbel MLE for maxima over consecutive blocks of ``block_size``.

    A trailing incomplete block is dropped. The estimate is at level
    ``t = block_size``.
    """
    x = np.asarray(series, float).ravel()
    block_size = int(block_size)
    if block_size < 1:
        raise ParameterDomainError("block size must be positive")
    if x.size < 2 * block_size:
        raise DegenerateDataError("need at least two complete blocks")
    nb = x.size // block_size
    m = x[: nb * block_size].reshape(nb, block_size).max(axis=1)
    return fit_gumbel(m, t=max(block_size, 1 + 1e-12), n=x.size, setting=block_size)


def fit_gumbel(maxima, t: float, n: int | None = None, setting: float = np.nan) -> MarginEstimate:
    """Gumbel MLE for a sample of maxima, reported at level ``t``."""
    m = np.asarray(maxima, float).ravel()
    if m.size < 2:
        raise DegenerateDataError("need at least two maxima")
    sd = m.std()
    if not sd > 1e-12 * max(1.0, np.abs(m).max()):
        raise DegenerateDataError("all block maxima are equal; the scale collapses to zero")
    s0 = sd * np.sqrt(6) / np.pi
    x0 = (m.mean() - 0.5772156649015329 * s0, s0)
    x, cov, ll, conv = _maximize(lambda mu, s: gumbel_loglik(m, mu, s),
                                 lambda mu, s: _gumbel_grad(m, mu, s), x0, sd / m.size)
    n = m.size if n is None else n
    return MarginEstimate(GumbelParams(x[0], x[1]), t, "block_maxima", setting, n, cov, ll, conv)


def censored_pot_closed_form(series, u: float, t: float) -> GumbelParams:
    """Stationary point of the censored likelihood.

    With ``p = exp(-(u - mu) / sigma) / t`` the likelihood separates into a
    binomial part maximized at ``p = k / n`` and an exponential part
    maximized at ``sigma = mean excess``.
    """
    x = np.asarray(series, float).ravel()
    exc = x[x > u]
    sigma = float(np.mean(exc - u))
    return GumbelParams(u + sigma * np.log(t * exc.size / x.size), sigma)


def fit_censored_pot(series, u: float | None = None, t: float | None = None,
                     quantile: float = 0.98) -> MarginEstimate:
    """Censored Gumbel MLE for exceedances of ``u`` at level ``t``.

    Defaults: ``u`` the empirical ``quantile`` and ``t = 1 / (1 - quantile)``.
    """
    x = np.asarray(series, float).ravel()
    x = x[np.isfinite(x)]
    if u is None:
        u = float(np.quantile(x, quantile))
    if t is None:
        t = 1.0 / (1.0 - quantile)
    if not t > 1:
        raise ParameterDomainError(f"level t must exceed 1, got {t}")
    if u < np.median(x):
        raise ParameterDomainError("threshold below the empirical median")
    exc = x[x > u]
    if exc.size == 0:
        raise EmptyExceedanceError(f"no observation exceeds the threshold {u}")
    if exc.size < MIN_EXCEEDANCES:
        raise DegenerateDataError(
            f"{exc.size} exceedances; at least {MIN_EXCEEDANCES} are required")
    if np.ptp(exc) == 0 and np.all(exc - u == 0):
        raise DegenerateDataError("exceedances carry no scale information")
    start = censored_pot_closed_form(x, u, t)
    x0 = (start.mu, start.sigma)
    x_opt, cov, ll, conv = _maximize(
        lambda mu, s: censored_gumbel_loglik(x, u, t, mu, s),
        lambda mu, s: _censored_grad(x.size, exc, u, t, mu, s), x0, start.sigma / exc.size)
    return MarginEstimate(GumbelParams(x_opt[0], x_opt[1]), t, "censored_pot", u, x.size,
                          cov, ll, conv)


def renormalize(e: MarginEstimate, t2: float, n: int | None = None) -> MarginEstimate:
    """Move an estimate to level ``t2`` keeping ``mu + sigma * log(n / t)`` fixed.

    The location of the maximum over the whole series does not depend on the
    level at which the margins were fitted; ``sigma`` is unchanged. ``n``
    cancels in the shift and defaults to ``e.n``.
    """
    if not t2 > 1:
        raise ParameterDomainError(f"level t must exceed 1, got {t2}")
    n = e.n if n is None else n
    mu2 = e.mu + e.sigma * (np.log(n / e.t) - np.log(n / t2))
    J = np.array([[1.0, np.log(t2 / e.t)], [0.0, 1.0]])
    return replace(e, params=GumbelParams(mu2, e.sigma), t=t2, cov=J @ e.cov @ J.T, n=n)


def implied_series_location(e: MarginEstimate, n: int | None = None) -> float:
    """``mu_t + sigma_t log(n / t)``: the level-free quantity preserved by renormalize."""
    n = e.n if n is None else n
    return e.mu + e.sigma * np.log(n / e.t)
