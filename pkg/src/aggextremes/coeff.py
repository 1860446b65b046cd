"""Extremal coefficients of aggregation functionals.

For a Brown-Resnick spectral process ``W = exp(G - gamma / 2)`` and a
positive covariate surface ``A``, the coefficient of a functional ``l`` is

    theta_xi = E[(l(W**xi A) / l(A)) ** (1 / xi)],   xi != 0,
    theta_0  = E[exp(l(A log W) / l(A))],             l linear.

Spatial averages with ``xi = 0`` have a closed form through the mean
variogram integral; everything else is estimated by Monte Carlo on a grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aggregation import (
    CellAverage,
    CovariateSurface,
    Functional,
    GammaBuilder,
    PointEval,
    QuadratureRule,
    Region,
    SampledField,
    evaluate_functional_on_sample,
    gauss_grid,
    is_linear,
    regular_grid,
    tensor_gauss,
)
from .errors import LinearityError, ParameterDomainError
from .variogram import VariogramParams, check_params, covariance_matrix, gamma as variogram


@dataclass(frozen=True)
class MCResult:
    value: float
    se: float
    n: int


def theta_power_1d(T: float, alpha: float, lam: float = 1.0) -> float:
    """Average-functional coefficient on ``[0, T]`` for ``gamma(h) = |h / lam| ** alpha``."""
    check_params(alpha, lam)
    if T <= 0:
        raise ParameterDomainError(f"interval length must be positive, got {T}")
    return float(np.exp(-T ** alpha / (2.0 * lam ** alpha * (alpha + 1.0) * (alpha + 2.0))))


def theta_avg_closed_form(region: Region, A: CovariateSurface | None = None,
                          p: VariogramParams = VariogramParams(),
                          q: QuadratureRule = QuadratureRule()) -> float:
    """Coefficient of the A-weighted spatial average over ``region`` with ``xi = 0``.

    ``log theta = -int int A(s) A(t) gamma(s - t) ds dt / (4 (int A)^2)``.
    """
    A = A if A is not None else CovariateSurface.constant()
    nodes, _ = tensor_gauss(region.lo, region.hi, q.nodes)
    if np.any(A(nodes) <= 0):
        raise ParameterDomainError("covariate surface A must be strictly positive")
    builder = GammaBuilder([CellAverage(region)], A.basis, q, diagonal_only=True)
    return float(np.exp(builder.log_theta(p, A.coef)[0]))


class SpectralSampler:
    """Exact draws of ``log W = G - gamma(. - origin) / 2`` at fixed nodes.

    ``G`` is the Gaussian process with variogram ``p`` pinned to zero at
    ``origin`` (default: the centroid of the nodes' bounding box). The
    covariance is factorized once by a symmetric eigendecomposition;
    eigenvalues below ``rank_tol`` times the largest are dropped.
    """

    def __init__(self, p: VariogramParams, coords, origin=None, spacing=None,
                 node_weights=None, rank_tol: float = 1e-12, max_nodes: int = 6000):
        coords = np.asarray(coords, float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.shape[0] > max_nodes:
            raise ParameterDomainError(
                f"{coords.shape[0]} nodes exceed the dense-factorization limit {max_nodes}")
        self.p = p
        self.coords = coords
        self.spacing = spacing
        self.node_weights = node_weights
        if origin is None:
            origin = 0.5 * (coords.min(0) + coords.max(0))
        self.origin = np.atleast_1d(np.asarray(origin, float))
        C = covariance_matrix(coords, p, origin=self.origin)
        ev, vec = np.linalg.eigh(C)
        keep = ev > rank_tol * max(ev[-1], np.finfo(float).tiny)
        self.factor = vec[:, keep] * np.sqrt(ev[keep])
        self.drift = -0.5 * variogram(coords - self.origin, p)

    @classmethod
    def on_grid(cls, p: VariogramParams, region: Region, per_axis, **kw) -> "SpectralSampler":
        coords, spacing = regular_grid(region, per_axis)
        return cls(p, coords, origin=kw.pop("origin", region.centroid), spacing=spacing, **kw)

    @classmethod
    def on_gauss_grid(cls, p: VariogramParams, region: Region, per_axis, **kw) -> "SpectralSampler":
        """Gauss-Legendre nodes; cell averages over ``region`` then use the
        matching quadrature weights instead of plain node means."""
        coords, weights, spacing = gauss_grid(region, per_axis)
        return cls(p, coords, origin=kw.pop("origin", region.centroid), spacing=spacing,
                   node_weights=weights, **kw)

    @classmethod
    def for_functionals(cls, p: VariogramParams, functionals: Sequence[Functional],
                        per_unit: int = 64, **kw) -> "SpectralSampler":
        """Regular grid with ``per_unit`` nodes per unit length over all supports."""
        lo, hi = _support_box(functionals)
        span = np.where(hi > lo, hi - lo, 1.0)
        per_axis = np.maximum(np.ceil(span * per_unit).astype(int), 1)
        if len(lo) == 1:
            region = Region(lo[0], lo[0] + span[0])
        else:
            region = Region(lo[0], lo[0] + span[0], lo[1], lo[1] + span[1])
        return cls.on_grid(p, region, per_axis, **kw)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    def draw_log_w(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.factor.shape[1]))
        return z @ self.factor.T + self.drift

    def field(self, values) -> SampledField:
        return SampledField(self.coords, values, self.spacing, self.node_weights)


def _support_box(functionals):
    pts = []
    for f in functionals:
        if isinstance(f, CellAverage):
            pts += [f.region.lo, f.region.hi]
        elif isinstance(f, PointEval):
            pts.append(np.array(f.point))
        else:
            pts += [np.array(p) for p in f.points]
    pts = np.array(pts)
    return pts.min(0), pts.max(0)


def _weights(A, sampler: SpectralSampler):
    if A is None:
        return np.ones(sampler.n_nodes)
    a = np.asarray(A(sampler.coords), float)
    if np.any(a <= 0):
        raise ParameterDomainError("covariate surface A must be strictly positive on the grid")
    return a


def _scaled_statistic(f: Functional, xi: float, log_w: np.ndarray, a: np.ndarray,
                      sampler: SpectralSampler) -> np.ndarray:
    """``l(A log W) / l(A)`` (xi = 0) or ``(l(W**xi A) / l(A)) ** (1 / xi)`` per draw."""
    # The functional is applied to the A-weighted field, so cell averages are
    # plain means here and the ratio carries the weighting.
    fa = sampler.field(a)
    denom = evaluate_functional_on_sample(f, fa)
    if xi == 0.0:
        return evaluate_functional_on_sample(f, sampler.field(a * log_w)) / denom
    num = evaluate_functional_on_sample(f, sampler.field(a * np.exp(xi * log_w)))
    return (num / denom) ** (1.0 / xi)


def _check_xi(f, xi):
    if not np.isfinite(xi):
        raise ParameterDomainError("xi must be finite")
    if xi == 0.0 and not is_linear(f):
        raise LinearityError(f"xi = 0 requires a linear functional, got {type(f).__name__}")


def theta_mc(f: Functional, xi: float, A=None, sampler: SpectralSampler | None = None,
             n: int = 100_000, seed=0, batch: int = 4000,
             p: VariogramParams | None = None) -> MCResult:
    """Monte Carlo extremal coefficient of one functional."""
    return multivariate_tail_mc([f], [0.0 if xi == 0 else float(np.sign(xi))], xi, A,
                                sampler, n, seed, batch, p)


def multivariate_tail_mc(functionals: Sequence[Functional], x, xi: float, A=None,
                         sampler: SpectralSampler | None = None, n: int = 100_000,
                         seed=0, batch: int = 4000, p: VariogramParams | None = None) -> MCResult:
    """Monte Carlo estimate of the joint tail measure of several functionals.

    ``xi = 0``: ``E max_j exp(l_j(A log W) / l_j(A) - x_j)``.
    ``xi != 0``: ``E max_j [l_j(W**xi A) / (|x_j| l_j(A))] ** (1 / xi)`` for
    ``xi * x_j > 0``.
    """
    functionals = list(functionals)
    x = np.atleast_1d(np.asarray(x, float))
    if x.size != len(functionals):
        raise ParameterDomainError("one threshold per functional required")
    for f in functionals:
        _check_xi(f, xi)
    if xi != 0.0 and np.any(xi * x <= 0):
        raise ParameterDomainError("thresholds must satisfy xi * x_j > 0")
    if sampler is None:
        if p is None:
            raise ParameterDomainError("either a sampler or variogram parameters are needed")
        sampler = SpectralSampler.for_functionals(p, functionals)
    a = _weights(A, sampler)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    total = total2 = 0.0
    done = 0
    while done < n:
        k = min(batch, n - done)
        log_w = sampler.draw_log_w(k, rng)
        stats = np.stack([_scaled_statistic(f, xi, log_w, a, sampler) for f in functionals], -1)
        if xi == 0.0:
            vals = np.exp(stats - x).max(axis=-1)
        else:
            vals = (stats * np.abs(x) ** (-1.0 / xi)).max(axis=-1)
        total += vals.sum()
        total2 += (vals ** 2).sum()
        done += k
    mean = total / n
    var = max(total2 / n - mean ** 2, 0.0) * n / max(n - 1, 1)
    return MCResult(float(mean), float(np.sqrt(var / n)), n)
