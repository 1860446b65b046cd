"""Simulation of aggregated and fine-scale extremes.

All samplers work with the log-spectral Gaussian vector of a Husler-Reiss
model: anchored at coordinate ``J`` it has mean ``-Gamma[:, J] / 2`` and
covariance ``(Gamma[j, J] + Gamma[k, J] - Gamma[j, k]) / 2``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ConditioningError, InvalidConfigurationError, ParameterDomainError
from .fit import AggregationScheme, ModelParams, model_mu_sigma
from .hr_core import anchored_covariance, check_gamma, cholesky_psd


@dataclass
class PseudoObservation:
    """Draws of the aggregated vector with the generator's latent pieces."""

    Y: np.ndarray
    Y_tilde: np.ndarray
    U: np.ndarray
    anchor: np.ndarray
    seed: object


@dataclass
class ConditionalDraw:
    """Simulated point values (n_draws, K) given aggregates anchored at ``J``.

    ``reproduced`` holds the conditioned aggregates after the round trip
    through the log-spectral scale; it equals the observations.
    """

    values: np.ndarray
    J: int
    u: np.ndarray
    reproduced: np.ndarray
    log_psi: np.ndarray


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _anchored_factors(G, anchors):
    """Cholesky factor of the anchored covariance for every anchor."""
    return {j: cholesky_psd(anchored_covariance(G, j)) for j in anchors}


def sample_tilde(G, n: int, seed=0, n_norm: int | None = None):
    """Sum-normalized Husler-Reiss draws ``Y~`` with anchors in the first ``n_norm``.

    ``Y~ = U + G~ - log sum_{j < n_norm} exp(G~_j) + log n_norm`` with
    ``U ~ Exp(1)`` and ``G~`` the Gaussian vector anchored at a uniformly
    chosen coordinate among the first ``n_norm``. Every coordinate ``j <
    n_norm`` then satisfies ``P(Y~_j > y) = exp(-y)`` for ``y >= log n_norm``.
    """
    G = np.asarray(G, float)
    check_gamma(G)
    m = G.shape[0]
    n_norm = m if n_norm is None else int(n_norm)
    if not 1 <= n_norm <= m:
        raise ParameterDomainError("normalizing block must be non-empty")
    rng = _rng(seed)
    anchor = rng.integers(0, n_norm, size=n)
    U = rng.exponential(size=n)
    Z = rng.standard_normal((n, m))
    Gt = np.empty((n, m))
    for j, C in _anchored_factors(G, np.unique(anchor)).items():
        rows = anchor == j
        Gt[rows] = Z[rows] @ C.T - 0.5 * G[:, j]
        Gt[rows, j] = 0.0
    Yt = U[:, None] + Gt - logsumexp(Gt[:, :n_norm], axis=1)[:, None] + np.log(n_norm)
    return Yt, U, anchor


def sample_aggregated(G, log_theta, ell_A, ell_B, n: int = 1, seed=0) -> PseudoObservation:
    """Aggregated pseudo-observations ``Y_j = l_j(A) (Y~_j + log theta_j) + l_j(B)``."""
    G = np.asarray(G, float)
    if G.shape[0] < 2:
        raise ParameterDomainError("at least two functionals are required")
    rng = _rng(seed)
    Yt, U, anchor = sample_tilde(G, n, rng)
    Y = np.asarray(ell_A) * (Yt + np.asarray(log_theta)) + np.asarray(ell_B)
    return PseudoObservation(Y, Yt, U, anchor, seed)


def sample_model(p: ModelParams, scheme: AggregationScheme, n: int, t: float, seed=0):
    """Draws whose per-row tails follow the model at level ``t``.

    ``Y_j = mu_j + sigma_j (Y~_j - log t)`` so that ``P(Y_j > y) =
    exp(-(y - mu_j) / sigma_j) / t`` above ``mu_j + sigma_j log(L / t)``.
    """
    mu, sigma = model_mu_sigma(p, scheme)
    Yt, U, anchor = sample_tilde(scheme.gamma(p), n, seed)
    return mu + sigma * (Yt - np.log(t))


def _split(G, L):
    m = G.shape[0]
    if not 1 <= L <= m:
        raise ParameterDomainError("number of conditioned coordinates out of range")
    return m - L


def conditional_log_psi(G, L: int, J: int, cond):
    """Mean and covariance of the target log-spectral values given the aggregates.

    ``cond`` holds the log-spectral values of the first ``L`` coordinates
    (``cond[J] = 0``); targets are the remaining coordinates.
    """
    G = np.asarray(G, float)
    K = _split(G, L)
    S = anchored_covariance(G, J)
    m = -0.5 * G[:, J]
    C = np.array([j for j in range(L) if j != J], int)
    T = np.arange(L, L + K)
    cond = np.asarray(cond, float)
    if C.size == 0:
        return m[T], S[np.ix_(T, T)]
    Scc = S[np.ix_(C, C)]
    try:
        Lc = np.linalg.cholesky(Scc)
    except np.linalg.LinAlgError:
        raise ConditioningError("conditioning covariance is singular") from None
    Stc = S[np.ix_(T, C)]
    B = np.linalg.solve(Lc, Stc.T)  # Lc^{-1} S_ct
    r = np.linalg.solve(Lc, cond[C] - m[C])
    return m[T] + B.T @ r, S[np.ix_(T, T)] - B.T @ B


def conditional_simulate(p: ModelParams, scheme: AggregationScheme, y, J: int, n_draws: int,
                         seed=0) -> ConditionalDraw:
    """Point values given observed aggregates with ``y[J]`` extreme.

    ``scheme`` lists the ``L`` observed cells first and the ``K`` target
    points after them. The exceedance ``u = (y_J - mu_J) / sigma_J`` must be
    positive.
    """
    y = np.asarray(y, float)
    L = y.size
    mu, sigma = model_mu_sigma(p, scheme)
    if not 0 <= J < L:
        raise ParameterDomainError("conditioning index must refer to an observed aggregate")
    u = (y[J] - mu[J]) / sigma[J]
    if not u > 0:
        raise ConditioningError(f"aggregate {J} does not exceed its location (u = {u:.3g})")
    G = scheme.gamma(p)
    cond = (y - mu[:L]) / sigma[:L] - u
    cond[J] = 0.0
    mean, cov = conditional_log_psi(G, L, J, cond)
    K = mean.size
    rng = _rng(seed)
    if K:
        C = cholesky_psd(cov)
        log_psi = mean + rng.standard_normal((n_draws, K)) @ C.T
    else:
        log_psi = np.zeros((n_draws, 0))
    values = sigma[L:] * (u + log_psi) + mu[L:]
    reproduced = sigma[:L] * (u + cond) + mu[:L]
    return ConditionalDraw(values, J, np.full(n_draws, u), reproduced, log_psi)


def unconditional_extreme_simulate(p: ModelParams, scheme: AggregationScheme, L: int,
                                   n_draws: int, seed=0, batch: int = 4096,
                                   probe: int = 2000, min_rate: float = 1e-3):
    """Extreme events with at least one of the first ``L`` aggregates above its location.

    Rejection sampler: propose sum-normalized draws over the first ``L``
    coordinates, keep those whose normalized maximum is positive. Returns
    (values (n_draws, L+K) in data units, normalized values, acceptance rate).
    """
    mu, sigma = model_mu_sigma(p, scheme)
    G = scheme.gamma(p)
    _split(G, L)
    rng = _rng(seed)
    Yt, _, _ = sample_tilde(G, probe, rng, n_norm=L)
    rate = float(np.mean((Yt[:, :L] - np.log(L)).max(axis=1) > 0))
    if rate < min_rate:
        raise InvalidConfigurationError(f"acceptance rate {rate:.2e} below {min_rate}")
    out, tried, kept = [], 0, 0
    while kept < n_draws:
        Yt, _, _ = sample_tilde(G, batch, rng, n_norm=L)
        Z = Yt - np.log(L)
        acc = Z[Z[:, :L].max(axis=1) > 0]
        out.append(acc)
        kept += len(acc)
        tried += batch
    Z = np.vstack(out)[:n_draws]
    return mu + sigma * Z, Z, kept / tried


# ---------------------------------------------------------------------------
# raster output


def write_raster_csv(path, coords, draws: np.ndarray):
    """Tidy CSV with columns draw, x, y, value."""
    coords = np.asarray(coords, float)
    draws = np.atleast_2d(draws)
    path = Path(path)
    with path.open("w") as fh:
        fh.write("draw,x,y,value\n")
        for d, row in enumerate(draws):
            for (x, yv), v in zip(coords, row):
                fh.write(f"{d},{x:.10g},{yv:.10g},{v:.17g}\n")
    return path


def write_raster_binary(path, draws: np.ndarray, nx: int, ny: int, bounds: Sequence[float],
                        seed=None):
    """Little-endian float64 grids (one per draw) with a JSON header file next to them."""
    draws = np.atleast_2d(np.asarray(draws, "<f8"))
    if draws.shape[1] != nx * ny:
        raise ParameterDomainError("raster size does not match nx * ny")
    path = Path(path)
    draws.tofile(path)
    header = {"nx": nx, "ny": ny, "bounds": list(map(float, bounds)),
              "draws": int(draws.shape[0]), "dtype": "<f8", "order": "draw,row(y),col(x)",
              "seed": seed}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(header, indent=2))
    return path


def read_raster_binary(path):
    path = Path(path)
    header = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    data = np.fromfile(path, dtype=header["dtype"]).reshape(header["draws"], header["ny"],
                                                           header["nx"])
    return data, header
