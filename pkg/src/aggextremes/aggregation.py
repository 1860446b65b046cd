"""Aggregation functionals, covariate surfaces and the variogram matrix of
mixed cell-average / point-evaluation vectors.

Double integrals of the power variogram over pairs of cells are rewritten as
single integrals over the lag ``h = s - t``,

    int_{S_j} int_{S_k} A(s) A(t) gamma(s - t) ds dt = int gamma(h) K_jk(h) dh,

where ``K_jk(h)`` is the A-weighted overlap of ``S_j`` and ``S_k + h``. The lag
domain is split at the kinks of ``K_jk`` and at ``h = 0`` so that every piece
is a box on which ``K_jk`` is smooth and ``gamma`` is smooth except possibly
at a corner. Corner-singular pieces go through a Duffy-type collapse with a
squared radial coordinate, which turns the ``|h| ** alpha`` kink into a
smooth integrand for Gauss-Legendre. Nodes and weights only depend on the
geometry and on the covariate basis, so they are computed once and reused
for every variogram parameter and every set of A-coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    CoverageError,
    GeometryError,
    NumericalQuadratureError,
    ParameterDomainError,
    UnsupportedFunctionalError,
)
from .variogram import VariogramParams, gamma as variogram


# ---------------------------------------------------------------------------
# geometry and functionals


@dataclass(frozen=True)
class Region:
    """Axis-aligned box; ``ymin``/``ymax`` left as None gives a 1D interval."""

    xmin: float
    xmax: float
    ymin: float | None = None
    ymax: float | None = None

    def __post_init__(self):
        if (self.ymin is None) != (self.ymax is None):
            raise GeometryError("ymin and ymax must both be given or both be None")
        if not np.all(np.isfinite(self.lo)) or not np.all(np.isfinite(self.hi)):
            raise GeometryError("region bounds must be finite")
        if np.any(self.hi <= self.lo):
            raise GeometryError(f"degenerate region {self}")

    @classmethod
    def interval(cls, a: float, b: float) -> "Region":
        return cls(a, b)

    @property
    def dim(self) -> int:
        return 1 if self.ymin is None else 2

    @property
    def lo(self) -> np.ndarray:
        return np.array([self.xmin] if self.ymin is None else [self.xmin, self.ymin], float)

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.xmax] if self.ymax is None else [self.xmax, self.ymax], float)

    @property
    def area(self) -> float:
        return float(np.prod(self.hi - self.lo))

    @property
    def centroid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, pts, tol=0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=-1)


@dataclass(frozen=True)
class CellAverage:
    region: Region

    @property
    def dim(self):
        return self.region.dim


@dataclass(frozen=True)
class PointEval:
    point: tuple

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(v) for v in np.atleast_1d(self.point)))

    @property
    def dim(self):
        return len(self.point)


@dataclass(frozen=True)
class Max:
    points: tuple

    def __post_init__(self):
        pts = tuple(tuple(float(v) for v in np.atleast_1d(p)) for p in self.points)
        object.__setattr__(self, "points", pts)

    @property
    def dim(self):
        return len(self.points[0])


@dataclass(frozen=True)
class WeightedSum:
    points: tuple
    weights: tuple

    def __post_init__(self):
        pts = tuple(tuple(float(v) for v in np.atleast_1d(p)) for p in self.points)
        w = tuple(float(v) for v in self.weights)
        if len(w) != len(pts):
            raise ParameterDomainError("one weight per point required")
        if min(w) < 0:
            raise ParameterDomainError("weights must be nonnegative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return len(self.points[0])


Functional = Union[CellAverage, PointEval, Max, WeightedSum]


def is_linear(f: Functional) -> bool:
    return isinstance(f, (CellAverage, PointEval, WeightedSum))


# ---------------------------------------------------------------------------
# covariates


class CovariateBasis:
    """Feature map ``s -> (f_1(s), ..., f_k(s))`` for linear covariate surfaces.

    The first feature is expected to be the intercept; identifiability
    constraints in the fitting code solve for its coefficient.
    """

    def __init__(self, names: Sequence[str], func: Callable[[np.ndarray], np.ndarray]):
        self.names = tuple(names)
        self._func = func

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = np.asarray(self._func(pts.reshape(-1, pts.shape[-1])), dtype=float)
        return out.reshape(pts.shape[:-1] + (len(self.names),))

    def __len__(self):
        return len(self.names)

    def __repr__(self):
        return f"CovariateBasis({list(self.names)})"

    @classmethod
    def constant(cls, name="a0") -> "CovariateBasis":
        return cls([name], lambda p: np.ones((p.shape[0], 1)))

    @classmethod
    def coordinates(cls, names: Sequence[str], axes: Sequence[int]) -> "CovariateBasis":
        """Intercept plus the raw coordinates listed in ``axes``."""
        axes = list(axes)
        if len(names) != len(axes) + 1:
            raise ValueError("need one name for the intercept and one per axis")

        def f(p):
            return np.column_stack([np.ones(p.shape[0])] + [p[:, a] for a in axes])

        return cls(names, f)

    @classmethod
    def piecewise(cls, names, regions: Sequence[Region], values) -> "CovariateBasis":
        """Intercept plus covariates that are constant on each region.

        ``values`` has one row per region and one column per non-intercept
        feature. Points outside every region take the value of the nearest
        region centroid.
        """
        values = np.asarray(values, dtype=float).reshape(len(regions), -1)
        lo = np.array([r.lo for r in regions])
        hi = np.array([r.hi for r in regions])
        cen = 0.5 * (lo + hi)

        def f(p):
            inside = np.all((p[:, None, :] >= lo) & (p[:, None, :] <= hi), axis=-1)
            d2 = ((p[:, None, :] - cen) ** 2).sum(-1)
            idx = np.where(inside.any(1), inside.argmax(1), d2.argmin(1))
            return np.column_stack([np.ones(p.shape[0]), values[idx]])

        return cls(names, f)

    @classmethod
    def raster(cls, names, x, y, layers) -> "CovariateBasis":
        """Intercept plus nearest-node lookups in regular rasters.

        ``layers`` has shape (k, ny, nx) on the node coordinates ``x``, ``y``.
        """
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        layers = np.asarray(layers, float)

        def f(p):
            ix = np.clip(np.searchsorted(x, p[:, 0]), 1, len(x) - 1)
            ix -= (p[:, 0] - x[ix - 1]) < (x[ix] - p[:, 0])
            iy = np.clip(np.searchsorted(y, p[:, 1]), 1, len(y) - 1)
            iy -= (p[:, 1] - y[iy - 1]) < (y[iy] - p[:, 1])
            return np.column_stack([np.ones(p.shape[0])] + [lay[iy, ix] for lay in layers])

        return cls(names, f)


@dataclass
class CovariateSurface:
    """Linear surface ``sum_i coef_i f_i(s)`` over a covariate basis."""

    basis: CovariateBasis
    coef: np.ndarray

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        if self.coef.shape != (len(self.basis),):
            raise ParameterDomainError("one coefficient per basis feature required")

    def __call__(self, pts) -> np.ndarray:
        return self.basis(pts) @ self.coef

    @classmethod
    def constant(cls, value=1.0) -> "CovariateSurface":
        return cls(CovariateBasis.constant(), np.array([value]))


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre settings.

    ``nodes`` per axis on regular pieces, ``singular_factor * nodes`` on
    pieces whose corner carries the variogram kink, ``inner`` per axis for
    the overlap kernels (exact for covariate bases of low polynomial degree).
    """

    nodes: int = 12
    inner: int = 3
    singular_factor: int = 2

    def __post_init__(self):
        if self.nodes < 2 or self.inner < 1 or self.singular_factor < 1:
            raise ParameterDomainError("nodes per axis must be at least 2")

    def refined(self) -> "QuadratureRule":
        return QuadratureRule(2 * self.nodes, self.inner, self.singular_factor)


@lru_cache(maxsize=None)
def _gl01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def tensor_gauss(lo, hi, n: int):
    """Tensor Gauss-Legendre nodes (n**d, d) and weights on the box [lo, hi]."""
    lo = np.atleast_1d(np.asarray(lo, float))
    hi = np.atleast_1d(np.asarray(hi, float))
    x, w = _gl01(n)
    grids = np.meshgrid(*[lo[i] + (hi[i] - lo[i]) * x for i in range(len(lo))], indexing="ij")
    wgrids = np.meshgrid(*[(hi[i] - lo[i]) * w for i in range(len(lo))], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def cell_mean(f: Callable, r: Region, q: QuadratureRule = QuadratureRule()) -> float:
    """Area mean of ``f`` over ``r`` by tensor Gauss-Legendre."""
    if not isinstance(r, Region):
        raise GeometryError("cell_mean needs a Region")
    x, w = tensor_gauss(r.lo, r.hi, q.nodes)
    vals = np.asarray(f(x), dtype=float)
    return float(w @ vals / r.area)


def functional_means(functionals: Sequence[Functional], basis: CovariateBasis,
                     q: QuadratureRule = QuadratureRule()) -> np.ndarray:
    """Matrix of ``l_j(f_i)``: one row per functional, one column per feature."""
    out = np.empty((len(functionals), len(basis)))
    for j, f in enumerate(functionals):
        if isinstance(f, CellAverage):
            x, w = tensor_gauss(f.region.lo, f.region.hi, q.nodes)
            out[j] = w @ basis(x) / f.region.area
        elif isinstance(f, PointEval):
            out[j] = basis(np.array(f.point)[None, :])[0]
        elif isinstance(f, WeightedSum):
            out[j] = np.asarray(f.weights) @ basis(np.array(f.points))
        else:
            raise UnsupportedFunctionalError(f"{type(f).__name__} is not linear")
    return out


# ---------------------------------------------------------------------------
# lag-domain quadrature


def _axis_pieces(lo, hi, breaks):
    pts = [lo, hi] + [b for b in breaks if lo < b < hi]
    if lo < 0.0 < hi:
        pts.append(0.0)
    pts = np.unique(np.asarray(pts, float))
    return list(zip(pts[:-1], pts[1:]))


def _corner_rule(far, n):
    """Rule on the box spanned by the origin and ``far`` (signed extents).

    The radial coordinate is squared so that ``|h| ** alpha`` times the
    Jacobian is at least C^2 at the origin for every alpha > 0.
    """
    x, w = _gl01(n)
    d = len(far)
    if d == 1:
        a = far[0]
        return (a * x ** 2)[:, None], 2.0 * abs(a) * x * w
    a, b = far
    wg, vg = np.meshgrid(x, x, indexing="ij")
    ww = np.outer(w, w)
    u = wg ** 2
    jac = 2.0 * abs(a * b) * wg ** 3 * ww
    t1 = np.stack([a * u, b * u * vg], axis=-1).reshape(-1, 2)
    t2 = np.stack([a * u * vg, b * u], axis=-1).reshape(-1, 2)
    return np.vstack([t1, t2]), np.concatenate([jac.ravel(), jac.ravel()])


def _lag_rule(lo, hi, breaks, q: QuadratureRule):
    """Nodes and weights for integrating gamma(h) * smooth(h) over the box [lo, hi]."""
    per_axis = [_axis_pieces(lo[i], hi[i], breaks[i]) for i in range(len(lo))]
    nodes, weights = [], []
    for piece in np.array(np.meshgrid(*[range(len(p)) for p in per_axis], indexing="ij")).reshape(len(lo), -1).T:
        plo = np.array([per_axis[i][k][0] for i, k in enumerate(piece)])
        phi = np.array([per_axis[i][k][1] for i, k in enumerate(piece)])
        at_zero = (plo == 0.0) | (phi == 0.0)
        if np.all(at_zero):
            far = np.where(plo == 0.0, phi, plo)
            x, w = _corner_rule(far, q.nodes * q.singular_factor)
        else:
            x, w = tensor_gauss(plo, phi, q.nodes)
        nodes.append(x)
        weights.append(w)
    return np.vstack(nodes), np.concatenate(weights)


def _cell_cell_rule(rj: Region, rk: Region, basis: CovariateBasis, q: QuadratureRule):
    """Lag nodes and weight tensors W[n, a, b] = w_n * int f_a(t + h_n) f_b(t) dt."""
    lo = rj.lo - rk.hi
    hi = rj.hi - rk.lo
    breaks = [(rj.lo[i] - rk.lo[i], rj.hi[i] - rk.hi[i]) for i in range(rj.dim)]
    h, w = _lag_rule(lo, hi, breaks, q)
    # t ranges over S_k intersected with S_j - h
    olo = np.maximum(rk.lo, rj.lo - h)
    ohi = np.minimum(rk.hi, rj.hi - h)
    ext = np.clip(ohi - olo, 0.0, None)
    xi, wi = tensor_gauss(np.zeros(rj.dim), np.ones(rj.dim), q.inner)
    t = olo[:, None, :] + ext[:, None, :] * xi[None, :, :]
    vol = np.prod(ext, axis=-1)
    ft = basis(t)
    fs = basis(t + h[:, None, :])
    kern = np.einsum("m,nma,nmb->nab", wi, fs, ft) * vol[:, None, None]
    return h, kern * w[:, None, None]


def _cell_point_rule(rj: Region, x: np.ndarray, basis: CovariateBasis, q: QuadratureRule):
    lo = rj.lo - x
    hi = rj.hi - x
    h, w = _lag_rule(lo, hi, [()] * rj.dim, q)
    return h, basis(h + x) * w[:, None]


class GammaBuilder:
    """Precomputed quadrature for mean variogram integrals of a functional list.

    Only cell averages and point evaluations are supported. ``diagonal_only``
    skips the pairwise terms and is enough for extremal coefficients.
    """

    def __init__(self, functionals: Sequence[Functional], basis: CovariateBasis | None = None,
                 quad: QuadratureRule = QuadratureRule(), diagonal_only: bool = False):
        self.functionals = list(functionals)
        self.basis = basis if basis is not None else CovariateBasis.constant()
        self.quad = quad
        self.diagonal_only = diagonal_only
        for f in self.functionals:
            if not isinstance(f, (CellAverage, PointEval)):
                raise UnsupportedFunctionalError(
                    f"closed-form variogram integrals exist only for cell averages and "
                    f"point evaluations, got {type(f).__name__}")
        dims = {f.dim for f in self.functionals}
        if len(dims) != 1:
            raise GeometryError("all functionals must live in the same dimension")
        self.dim = dims.pop()
        self.m = len(self.functionals)
        self.is_cell = np.array([isinstance(f, CellAverage) for f in self.functionals])
        k = len(self.basis)

        # integral of each basis feature over each cell (zero row for points)
        self.cell_mass = np.zeros((self.m, k))
        self.point_basis = np.zeros((self.m, k))
        for j, f in enumerate(self.functionals):
            if self.is_cell[j]:
                x, w = tensor_gauss(f.region.lo, f.region.hi, quad.nodes)
                self.cell_mass[j] = w @ self.basis(x)
            else:
                self.point_basis[j] = self.basis(np.array(f.point)[None])[0]

        # cell-cell pairs (quadratic in the A-coefficients)
        cc_nodes, cc_w, cc_seg, cc_pairs = [], [], [], []
        # cell-point pairs (linear in the A-coefficients)
        cp_nodes, cp_w, cp_seg, cp_pairs = [], [], [], []
        pp_pairs = []
        for j in range(self.m):
            for l in range(j, self.m):
                if self.diagonal_only and l != j:
                    continue
                fj, fl = self.functionals[j], self.functionals[l]
                if self.is_cell[j] and self.is_cell[l]:
                    h, W = _cell_cell_rule(fj.region, fl.region, self.basis, quad)
                    cc_seg.append(np.full(len(h), len(cc_pairs)))
                    cc_pairs.append((j, l))
                    cc_nodes.append(h)
                    cc_w.append(W)
                elif self.is_cell[j] != self.is_cell[l]:
                    c, p = (j, l) if self.is_cell[j] else (l, j)
                    h, W = _cell_point_rule(self.functionals[c].region,
                                            np.array(self.functionals[p].point), self.basis, quad)
                    cp_seg.append(np.full(len(h), len(cp_pairs)))
                    cp_pairs.append((c, p))
                    cp_nodes.append(h)
                    cp_w.append(W)
                elif l != j:
                    pp_pairs.append((j, l))
        self._cc = self._pack(cc_nodes, cc_w, cc_seg, cc_pairs)
        self._cp = self._pack(cp_nodes, cp_w, cp_seg, cp_pairs)
        pts = {j: np.array(f.point) for j, f in enumerate(self.functionals) if not self.is_cell[j]}
        self._pp = (np.array(pp_pairs, int).reshape(-1, 2),
                    np.array([pts[j] - pts[l] for j, l in pp_pairs]).reshape(-1, self.dim))

    @staticmethod
    def _pack(nodes, weights, segs, pairs):
        if not pairs:
            return None
        return (np.vstack(nodes), np.concatenate(weights), np.concatenate(segs),
                np.array(pairs, int))

    @property
    def n_nodes(self) -> int:
        return sum(len(part[0]) for part in (self._cc, self._cp) if part is not None)

    def a_bar(self, coef) -> np.ndarray:
        """Integral of A over each cell (1 for points, whose weight is a unit mass)."""
        coef = np.asarray(coef, float)
        abar = self.cell_mass @ coef
        abar[~self.is_cell] = 1.0
        return abar

    def mean_integrals(self, p: VariogramParams, coef=None) -> np.ndarray:
        """Matrix of A-weighted mean variogram values between functionals.

        Entry (j, k) is the double integral of ``A(s) A(t) gamma(s - t)``
        over ``S_j x S_k`` divided by ``Abar_j Abar_k`` (single integral or
        plain variogram when points are involved). Off-diagonal entries are
        NaN when the builder was created with ``diagonal_only``.
        """
        coef = np.ones(len(self.basis)) if coef is None else np.asarray(coef, float)
        if coef.shape != (len(self.basis),):
            raise ParameterDomainError("one A-coefficient per basis feature required")
        abar = self.a_bar(coef)
        if np.any(abar[self.is_cell] <= 0):
            raise ParameterDomainError("A-surface must be positive on every cell")
        out = np.full((self.m, self.m), np.nan) if self.diagonal_only else np.zeros((self.m, self.m))
        np.fill_diagonal(out, 0.0)
        if self._cc is not None:
            h, W, seg, pairs = self._cc
            vals = variogram(h, p) * np.einsum("nab,a,b->n", W, coef, coef)
            tot = np.bincount(seg, weights=vals, minlength=len(pairs))
            tot /= abar[pairs[:, 0]] * abar[pairs[:, 1]]
            out[pairs[:, 0], pairs[:, 1]] = tot
            out[pairs[:, 1], pairs[:, 0]] = tot
        if self._cp is not None:
            h, W, seg, pairs = self._cp
            vals = variogram(h, p) * (W @ coef)
            tot = np.bincount(seg, weights=vals, minlength=len(pairs)) / abar[pairs[:, 0]]
            out[pairs[:, 0], pairs[:, 1]] = tot
            out[pairs[:, 1], pairs[:, 0]] = tot
        pairs, lags = self._pp
        if len(pairs):
            g = variogram(lags, p)
            out[pairs[:, 0], pairs[:, 1]] = g
            out[pairs[:, 1], pairs[:, 0]] = g
        return out

    def log_theta(self, p: VariogramParams, coef=None) -> np.ndarray:
        """Log extremal coefficients of each functional (0 for points)."""
        return -0.25 * np.diag(self.mean_integrals(p, coef))

    def gamma(self, p: VariogramParams, coef=None) -> np.ndarray:
        if self.diagonal_only:
            raise ValueError("builder was created with diagonal_only=True")
        I = self.mean_integrals(p, coef)
        d = np.diag(I)
        G = I - 0.5 * d[:, None] - 0.5 * d[None, :]
        np.fill_diagonal(G, 0.0)
        return G


def check_conditionally_negative_definite(G, n_vectors=200, rtol=1e-8, seed=0) -> float:
    """Largest normalized value of w' G w over random zero-sum contrasts.

    Returns the worst ratio ``w'Gw / (|w|^2 max|G|)``; values above ``rtol``
    indicate a violation.
    """
    G = np.asarray(G, float)
    m = G.shape[0]
    if m < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n_vectors, m))
    w -= w.mean(axis=1, keepdims=True)
    scale = max(np.abs(G).max(), np.finfo(float).tiny)
    vals = np.einsum("ni,ij,nj->n", w, G, w) / ((w ** 2).sum(1) * scale)
    return float(vals.max())


def gamma_matrix(functionals: Sequence[Functional], A: CovariateSurface | None = None,
                 p: VariogramParams = VariogramParams(), q: QuadratureRule = QuadratureRule(),
                 check: bool = True) -> np.ndarray:
    """Husler-Reiss variogram matrix of cell averages followed by point values."""
    A = A if A is not None else CovariateSurface.constant()
    seen_point = False
    for f in functionals:
        if isinstance(f, PointEval):
            seen_point = True
        elif isinstance(f, CellAverage) and seen_point:
            raise ValueError("cells must precede point evaluations")
    builder = GammaBuilder(functionals, A.basis, q)
    G = builder.gamma(p, A.coef)
    if check:
        worst = check_conditionally_negative_definite(G)
        if worst > 1e-8:
            raise NumericalQuadratureError(
                f"variogram matrix violates conditional negative definiteness "
                f"(ratio {worst:.2e}); increase quadrature nodes")
    return G


def quadrature_convergence(functionals, A: CovariateSurface | None = None,
                           p: VariogramParams = VariogramParams(),
                           q: QuadratureRule = QuadratureRule(), rtol: float = 1e-6):
    """Compare the matrix at ``q`` with the one at doubled order.

    Returns (gamma, max scaled change); raises NumericalQuadratureError when
    any entry moves by more than ``rtol * (1 + |Gamma_jk|)``.
    """
    A = A if A is not None else CovariateSurface.constant()
    G1 = GammaBuilder(functionals, A.basis, q).gamma(p, A.coef)
    G2 = GammaBuilder(functionals, A.basis, q.refined()).gamma(p, A.coef)
    change = np.abs(G2 - G1) / (1.0 + np.abs(G2))
    worst = float(change.max())
    if worst >= rtol:
        raise NumericalQuadratureError(
            f"quadrature not converged: doubling nodes moves entries by {worst:.2e}")
    return G2, worst


# ---------------------------------------------------------------------------
# functionals on sampled fields


@dataclass
class SampledField:
    """Field values on a regular node set.

    ``coords`` has shape (N, d); ``values`` has shape (..., N) so several draws
    can be stored at once; ``spacing`` is the (largest) node spacing per
    axis. ``node_weights`` are quadrature volumes used by cell averages;
    equal weights (plain node means) when omitted.
    """

    coords: np.ndarray
    values: np.ndarray
    spacing: np.ndarray = field(default=None)
    node_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, float)
        if self.coords.ndim == 1:
            self.coords = self.coords[:, None]
        self.values = np.asarray(self.values, float)
        if self.spacing is None:
            self.spacing = np.array([np.diff(np.unique(c)).min() if len(np.unique(c)) > 1 else 1.0
                                     for c in self.coords.T])
        self.spacing = np.atleast_1d(np.asarray(self.spacing, float))
        if self.node_weights is None:
            self.node_weights = np.ones(self.coords.shape[0])
        self.node_weights = np.asarray(self.node_weights, float)

    def nearest(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        d2 = ((pts[:, None, :] - self.coords[None, :, :]) ** 2).sum(-1)
        idx = d2.argmin(axis=1)
        off = np.abs(self.coords[idx] - pts)
        if np.any(off > 0.5 * self.spacing + 1e-12):
            raise CoverageError("point lies outside the sampled grid")
        return idx


def regular_grid(region: Region, per_axis) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centred nodes of a regular grid covering ``region``."""
    per_axis = np.broadcast_to(np.atleast_1d(per_axis), (region.dim,))
    axes = [region.lo[i] + (np.arange(per_axis[i]) + 0.5) * (region.hi[i] - region.lo[i]) / per_axis[i]
            for i in range(region.dim)]
    mesh = np.meshgrid(*axes, indexing="xy")
    coords = np.stack([g.ravel() for g in mesh], axis=-1)
    spacing = (region.hi - region.lo) / per_axis
    return coords, spacing


def gauss_grid(region: Region, per_axis) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre nodes on ``region`` with their weights and largest gap."""
    per_axis = np.broadcast_to(np.atleast_1d(per_axis), (region.dim,))
    axes, wts, gaps = [], [], []
    for i in range(region.dim):
        x, w = _gl01(int(per_axis[i]))
        width = region.hi[i] - region.lo[i]
        ax = region.lo[i] + width * x
        axes.append(ax)
        wts.append(width * w)
        edges = np.concatenate([[region.lo[i]], ax, [region.hi[i]]])
        gaps.append(2.0 * np.diff(edges).max())
    coords = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="xy")], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in np.meshgrid(*wts, indexing="xy")], -1), -1)
    return coords, weights, np.array(gaps)


def functional_weights(f: Functional, field: SampledField, A: Callable | None = None):
    """Node indices and weights representing a linear functional on ``field``."""
    if isinstance(f, CellAverage):
        idx = np.flatnonzero(f.region.contains(field.coords))
        if idx.size == 0:
            raise CoverageError("no grid node inside the region")
        cov_lo = field.coords[idx].min(0) - 0.5 * field.spacing
        cov_hi = field.coords[idx].max(0) + 0.5 * field.spacing
        if np.any(cov_lo > f.region.lo + 1e-9) or np.any(cov_hi < f.region.hi - 1e-9):
            raise CoverageError("grid does not cover the region")
        w = field.node_weights[idx]
        if A is not None:
            w = w * np.asarray(A(field.coords[idx]), float)
        return idx, w / w.sum()
    if isinstance(f, PointEval):
        return field.nearest(np.array(f.point)), np.ones(1)
    if isinstance(f, WeightedSum):
        return field.nearest(np.array(f.points)), np.asarray(f.weights)
    raise UnsupportedFunctionalError(f"{type(f).__name__} is not linear")


def evaluate_functional_on_sample(f: Functional, field: SampledField, A: Callable | None = None):
    """Apply ``f`` to the sampled values (vectorized over leading axes).

    Cell averages use the mean of the nodes inside the region, weighted by
    ``A`` at the nodes when given; point evaluations use the nearest node.
    """
    if isinstance(f, Max):
        idx = field.nearest(np.array(f.points))
        return field.values[..., idx].max(axis=-1)
    idx, w = functional_weights(f, field, A)
    return field.values[..., idx] @ w
