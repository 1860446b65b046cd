"""Joint estimation of marginal and dependence parameters from aggregates.

The model for functional ``j`` at level ``t`` is Gumbel with

    mu_j    = l_j(A) * (b_t + a_t * log theta_j) + l_j(B),
    sigma_j = a_t * l_j(A),

and the normalized vector is Husler-Reiss with the variogram matrix of the
functionals. ``A`` and ``B`` are linear in covariate bases whose first
feature is the intercept; the intercepts are pinned by ``l_1(A) = 1`` and
``l_1(B) = 0`` for the first (reference) functional.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize

from .aggregation import (
    CellAverage,
    CovariateBasis,
    Functional,
    GammaBuilder,
    PointEval,
    QuadratureRule,
    functional_means,
    tensor_gauss,
)
from .errors import (
    AggExtremesError,
    IdentifiabilityError,
    InvalidConfigurationError,
    ParameterDomainError,
)
from .hr_core import _censored_terms, lattice_points, genz_batch
from .margins import MarginEstimate
from .variogram import VariogramParams

VARIOGRAM_FIELDS = ("alpha", "lam", "eta", "aniso")
VARIOGRAM_NAMES = {"alpha": "alpha", "lam": "lambda", "eta": "eta", "aniso": "a"}
_PENALTY = 1e100
_ALPHA_START = 1.9


@dataclass(frozen=True)
class ModelParams:
    a_t: float
    b_t: float
    coef_A: tuple
    coef_B: tuple
    variogram: VariogramParams = VariogramParams()

    def __post_init__(self):
        object.__setattr__(self, "coef_A", tuple(float(c) for c in np.atleast_1d(self.coef_A)))
        object.__setattr__(self, "coef_B", tuple(float(c) for c in np.atleast_1d(self.coef_B)))
        object.__setattr__(self, "a_t", float(self.a_t))
        object.__setattr__(self, "b_t", float(self.b_t))
        if not self.a_t > 0:
            raise ParameterDomainError(f"a(t) must be positive, got {self.a_t}")


@dataclass
class FitResult:
    params: ModelParams
    names: dict
    objective: float
    converged: bool
    n_iter: int
    n_evals: int
    method: str
    identifiable: bool = True
    message: str = ""
    jackknife_sd: dict | None = None

    def as_dict(self) -> dict:
        return self.names_to_values(self.params)

    def names_to_values(self, p: ModelParams) -> dict:
        out = {"a_n": p.a_t, "b_n": p.b_t}
        out.update(dict(zip(self.names["A"], p.coef_A)))
        out.update(dict(zip(self.names["B"], p.coef_B)))
        for f in VARIOGRAM_FIELDS:
            out[VARIOGRAM_NAMES[f]] = getattr(p.variogram, f)
        return out

    def to_json(self) -> str:
        doc = {"method": self.method, "converged": self.converged,
               "objective": self.objective, "n_iter": self.n_iter, "n_evals": self.n_evals,
               "identifiable": self.identifiable, "message": self.message,
               "basis_A": list(self.names["A"]), "basis_B": list(self.names["B"]),
               "estimate": self.as_dict()}
        if self.jackknife_sd is not None:
            doc["jackknife_sd"] = self.jackknife_sd
        return json.dumps(doc, indent=2)

    @staticmethod
    def params_from_json(text: str) -> ModelParams:
        doc = json.loads(text)
        est = doc["estimate"]
        vp = VariogramParams(**{f: est[VARIOGRAM_NAMES[f]] for f in VARIOGRAM_FIELDS})
        return ModelParams(est["a_n"], est["b_n"], [est[k] for k in doc["basis_A"]],
                           [est[k] for k in doc["basis_B"]], vp)


# ---------------------------------------------------------------------------
# the model map


class AggregationScheme:
    """Functionals and covariate bases with all parameter-free precomputations.

    ``functionals[0]`` is the reference functional for identifiability.
    ``free_variogram`` lists which variogram fields are estimated; the rest
    stay at the values of the initial parameters. With ``dependence=False``
    only extremal coefficients are prepared (enough for least squares).
    """

    def __init__(self, functionals: Sequence[Functional], basis_A: CovariateBasis | None = None,
                 basis_B: CovariateBasis | None = None,
                 free_variogram: Sequence[str] = ("alpha", "lam"),
                 quad: QuadratureRule = QuadratureRule(), dependence: bool = True):
        self.functionals = list(functionals)
        if not self.functionals:
            raise ParameterDomainError("at least one functional is required")
        for f in self.functionals:
            if not isinstance(f, (CellAverage, PointEval)):
                raise ParameterDomainError("only cell averages and point evaluations are supported")
        self.basis_A = basis_A if basis_A is not None else CovariateBasis.constant("a0")
        self.basis_B = basis_B if basis_B is not None else CovariateBasis.constant("b0")
        bad = set(free_variogram) - set(VARIOGRAM_FIELDS)
        if bad:
            raise ParameterDomainError(f"unknown variogram fields {sorted(bad)}")
        self.free_variogram = tuple(f for f in VARIOGRAM_FIELDS if f in free_variogram)
        self.quad = quad
        self.L = len(self.functionals)
        self.mean_A = functional_means(self.functionals, self.basis_A, quad)
        self.mean_B = functional_means(self.functionals, self.basis_B, quad)
        if abs(self.mean_A[0, 0]) < 1e-12 or abs(self.mean_B[0, 0]) < 1e-12:
            raise IdentifiabilityError("the first basis feature must not vanish on the reference")
        self.builder = GammaBuilder(self.functionals, self.basis_A, quad,
                                    diagonal_only=not dependence)
        pts = []
        for f in self.functionals:
            if isinstance(f, CellAverage):
                pts.append(tensor_gauss(f.region.lo, f.region.hi, 2)[0])
                lo, hi = f.region.lo, f.region.hi
                pts.append(np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(len(lo), -1).T)
            else:
                pts.append(np.array(f.point)[None])
        self.check_points = np.vstack(pts)
        self._A_check = self.basis_A(self.check_points)

    # parameter bookkeeping --------------------------------------------------

    @property
    def names(self) -> dict:
        return {"A": list(self.basis_A.names), "B": list(self.basis_B.names)}

    @property
    def free_names(self) -> list[str]:
        return (["a_n", "b_n"] + list(self.basis_A.names[1:]) + list(self.basis_B.names[1:])
                + [VARIOGRAM_NAMES[f] for f in self.free_variogram])

    def normalize(self, p: ModelParams) -> ModelParams:
        """Rescale A (with a_t and b_t) so that l_1(A) = 1; solve the B intercept.

        The A rescaling leaves every (mu_j, sigma_j) unchanged. The B
        intercept is fixed by the constraint l_1(B) = 0.
        """
        cA = np.array(p.coef_A)
        c = float(self.mean_A[0] @ cA)
        if c <= 0:
            raise ParameterDomainError("A must be positive on the reference functional")
        cB = np.array(p.coef_B)
        cB[0] = -(self.mean_B[0, 1:] @ cB[1:]) / self.mean_B[0, 0]
        return replace(p, coef_A=cA / c, a_t=p.a_t * c, b_t=p.b_t * c, coef_B=cB)

    def to_vector(self, p: ModelParams) -> np.ndarray:
        p = self.normalize(p)
        v = [np.log(p.a_t), p.b_t, *p.coef_A[1:], *p.coef_B[1:]]
        for f in self.free_variogram:
            v.append(_to_free(f, getattr(p.variogram, f)))
        return np.array(v, float)

    def from_vector(self, v, template: ModelParams) -> ModelParams:
        v = np.asarray(v, float)
        kA, kB = len(self.basis_A), len(self.basis_B)
        i = 2
        cA = np.empty(kA)
        cA[1:] = v[i:i + kA - 1]
        i += kA - 1
        cA[0] = (1.0 - self.mean_A[0, 1:] @ cA[1:]) / self.mean_A[0, 0]
        cB = np.empty(kB)
        cB[1:] = v[i:i + kB - 1]
        i += kB - 1
        cB[0] = -(self.mean_B[0, 1:] @ cB[1:]) / self.mean_B[0, 0]
        changes = {}
        for f in self.free_variogram:
            changes[f] = _from_free(f, v[i])
            i += 1
        vp = template.variogram.replace(**changes)
        return ModelParams(np.exp(v[0]), v[1], cA, cB, vp)

    # model quantities --------------------------------------------------------

    def check_positive(self, p: ModelParams):
        if np.any(self._A_check @ np.array(p.coef_A) <= 0):
            raise ParameterDomainError("A-surface must be strictly positive on the study region")

    def ell_A(self, p: ModelParams) -> np.ndarray:
        return self.mean_A @ np.array(p.coef_A)

    def ell_B(self, p: ModelParams) -> np.ndarray:
        return self.mean_B @ np.array(p.coef_B)

    def log_theta(self, p: ModelParams) -> np.ndarray:
        return self.builder.log_theta(p.variogram, np.array(p.coef_A))

    def gamma(self, p: ModelParams) -> np.ndarray:
        return self.builder.gamma(p.variogram, np.array(p.coef_A))

    def subset(self, idx) -> "AggregationScheme":
        return AggregationScheme([self.functionals[i] for i in idx], self.basis_A, self.basis_B,
                                 self.free_variogram, self.quad,
                                 dependence=not self.builder.diagonal_only)


def _to_free(name, value):
    if name == "alpha":
        value = min(value, 2.0 - 1e-9)
        return np.log(value / (2.0 - value))
    if name == "lam":
        return np.log(value)
    if name == "eta":
        return np.tan(np.clip(value, -np.pi / 2 + 1e-9, np.pi / 2 - 1e-9))
    return np.log(max(value - 1.0, 1e-8))


def _from_free(name, z):
    if name == "alpha":
        return 2.0 / (1.0 + np.exp(-z))
    if name == "lam":
        return float(np.exp(z))
    if name == "eta":
        return float(np.arctan(z))
    return 1.0 + float(np.exp(z))


def model_mu_sigma(p: ModelParams, scheme: AggregationScheme) -> tuple[np.ndarray, np.ndarray]:
    """Gumbel location and scale of every functional at the level of ``p``."""
    scheme.check_positive(p)
    lA = scheme.ell_A(p)
    mu = lA * (p.b_t + p.a_t * scheme.log_theta(p)) + scheme.ell_B(p)
    return mu, p.a_t * lA


# ---------------------------------------------------------------------------
# optimization helpers


def _nelder_mead(obj: Callable, x0: np.ndarray, max_evals: int, n_restarts: int, seed: int,
                 step: float = 0.1, xatol: float = 1e-6, fatol: float = 1e-8):
    """Nelder-Mead with restarts from the incumbent on a fresh random simplex."""
    rng = np.random.default_rng(seed)
    x, fx = np.asarray(x0, float), obj(np.asarray(x0, float))
    start_f = fx
    n_it = n_ev = 0
    converged = False
    for r in range(n_restarts + 1):
        k = x.size
        if r == 0:
            simplex = np.vstack([x, x + step * np.eye(k)])
        else:
            simplex = np.vstack([x, x + step * rng.choice([-1.0, 1.0], (k, k)) * np.eye(k)])
        budget = max_evals - n_ev
        if budget <= k + 1:
            break
        res = minimize(obj, x, method="Nelder-Mead",
                       options=dict(initial_simplex=simplex, maxfev=budget, xatol=xatol,
                                    fatol=fatol, adaptive=k > 4))
        n_it += res.nit
        n_ev += res.nfev
        improved = fx - res.fun
        if res.fun <= fx:
            x, fx = res.x, res.fun
        converged = bool(res.status == 0)
        if r > 0 and improved < fatol * max(1.0, abs(fx)):
            break
    return x, fx, converged and fx <= start_f, n_it, n_ev


# ---------------------------------------------------------------------------
# least squares on marginal estimates


def margin_arrays(estimates: Sequence[MarginEstimate]):
    """Location, scale and default weights (inverse estimator variances)."""
    ts = {round(e.t, 12) for e in estimates}
    if len(ts) != 1:
        raise ParameterDomainError("margin estimates must share one level t; renormalize first")
    mu = np.array([e.mu for e in estimates])
    sig = np.array([e.sigma for e in estimates])
    var = np.array([np.diag(e.cov) for e in estimates])
    if np.all(np.isfinite(var)) and np.all(var > 0):
        v, w = 1.0 / var[:, 0], 1.0 / var[:, 1]
    else:
        v, w = np.ones(len(mu)), np.ones(len(mu))
    return mu, sig, v, w


def fit_least_squares(mu_hat, sigma_hat, scheme: AggregationScheme, init: ModelParams,
                      v=None, w=None, max_evals: int = 4000, n_restarts: int = 2,
                      seed: int = 0, polish: bool = True) -> FitResult:
    """Weighted least squares fit of the model locations and scales.

    Minimizes ``sum_j v_j (mu_hat_j - mu_j)^2 + w_j (sigma_hat_j - sigma_j)^2``
    by Nelder-Mead with restarts and a trust-region polish. Rank deficiency
    of the weighted residual Jacobian at the optimum flags the fit as
    non-identifiable.
    """
    mu_hat = np.asarray(mu_hat, float)
    sigma_hat = np.asarray(sigma_hat, float)
    L = scheme.L
    if mu_hat.shape != (L,) or sigma_hat.shape != (L,):
        raise ParameterDomainError("one location and scale estimate per functional required")
    v = np.ones(L) if v is None else np.asarray(v, float)
    w = np.ones(L) if w is None else np.asarray(w, float)
    if np.any(v < 0) or np.any(w < 0) or not (v.sum() + w.sum()) > 0:
        raise ParameterDomainError("weights must be nonnegative and not all zero")
    x0 = scheme.to_vector(init)
    n_info = int(np.count_nonzero(v) + np.count_nonzero(w))
    if L < 2 or n_info < x0.size:
        raise IdentifiabilityError(
            f"{n_info} weighted marginal summaries cannot identify {x0.size} parameters")
    sv, sw = np.sqrt(v), np.sqrt(w)

    def residuals(x):
        p = scheme.from_vector(x, init)
        mu, sig = model_mu_sigma(p, scheme)
        return np.concatenate([sv * (mu_hat - mu), sw * (sigma_hat - sig)])

    def obj(x):
        try:
            r = residuals(x)
        except (AggExtremesError, ValueError, FloatingPointError):
            return _PENALTY
        val = float(r @ r)
        return val if np.isfinite(val) else _PENALTY

    x, fx, conv, n_it, n_ev = _nelder_mead(obj, x0, max_evals, n_restarts, seed)
    if polish:
        try:
            res = least_squares(residuals, x, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14)
            if 2 * res.cost <= fx:
                x, fx = res.x, 2 * float(res.cost)
                n_ev += res.nfev
                conv = True
        except (AggExtremesError, ValueError):
            pass
    identifiable, message = True, ""
    try:
        J = _jacobian(residuals, x)
        s = np.linalg.svd(J, compute_uv=False)
        if s[-1] < 1e-7 * s[0]:
            identifiable = False
            message = "flat directions in the least-squares objective: parameters not identifiable"
    except (AggExtremesError, ValueError):
        pass
    p = scheme.normalize(scheme.from_vector(x, init))
    return FitResult(p, scheme.names, fx, conv, n_it, n_ev, "least_squares", identifiable, message)


def _jacobian(fun, x, h=1e-6):
    f0 = fun(x)
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        J[:, i] = (fun(x + e) - fun(x - e)) / (2 * e[i])
    return J


# ---------------------------------------------------------------------------
# censored likelihood


@dataclass
class ExceedanceData:
    """Rows with at least one exceedance, plus the total number of rows.

    ``rows`` holds the original row indices (time order) of ``values``.
    """

    values: np.ndarray
    n: int
    u: np.ndarray
    rows: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, float))
        self.u = np.asarray(self.u, float)
        if self.values.shape[1] != self.u.size:
            raise ParameterDomainError("one threshold per functional required")
        if self.rows is None:
            self.rows = np.arange(len(self.values))
        if self.values.shape[0] and not np.all((self.values > self.u).any(axis=1)):
            raise ParameterDomainError("every stored row must exceed at least one threshold")
        if self.n < len(self.values):
            raise ParameterDomainError("total count below the number of exceedance rows")

    @classmethod
    def from_matrix(cls, X, u) -> "ExceedanceData":
        X = np.asarray(X, float)
        u = np.asarray(u, float)
        keep = np.flatnonzero((X > u).any(axis=1))
        return cls(X[keep], X.shape[0], u, keep)

    def drop(self, idx) -> "ExceedanceData":
        """Remove stored rows by position (and reduce the total count)."""
        keep = np.setdiff1d(np.arange(len(self.values)), idx)
        return ExceedanceData(self.values[keep], self.n - (len(self.values) - keep.size),
                              self.u, self.rows[keep])


@dataclass(frozen=True)
class QmcSettings:
    """Fixed quasi-Monte Carlo points (common random numbers across parameters)."""

    n_points: int = 512
    seed: int = 0


def _batched_cdf(items, qmc: QmcSettings):
    """log P(N(0, LL') <= upper) for a list of (upper, chol); grouped by dimension."""
    out = np.zeros(len(items))
    by_dim = {}
    for i, (upper, chol) in enumerate(items):
        by_dim.setdefault(upper.size, []).append(i)
    for d, idx in by_dim.items():
        if d == 0:
            continue
        up = np.array([items[i][0] for i in idx])
        ch = np.array([items[i][1] for i in idx])
        pts = lattice_points(d, qmc.n_points, 1, qmc.seed)
        prob = genz_batch(up, ch, pts)[:, 0]
        with np.errstate(divide="ignore"):
            out[idx] = np.log(prob)
    return out


def exponent_measure_qmc(x, G, qmc: QmcSettings = QmcSettings(),
                         orders: dict | None = None) -> float:
    """Exponent measure by the Euler identity on fixed QMC points."""
    x = np.asarray(x, float)
    items, logs = [], []
    for j in range(x.size):
        up, ch, lp = _censored_terms(x, G, [j], orders, ("V", j))
        items.append((up, ch))
        logs.append(lp)
    return float(np.sum(np.exp(np.array(logs) + _batched_cdf(items, qmc))))


def censored_loglik(p: ModelParams, scheme: AggregationScheme, data: ExceedanceData, t: float,
                    qmc: QmcSettings = QmcSettings(), orders: dict | None = None) -> float:
    """Censored Husler-Reiss log-likelihood of threshold exceedances.

    Rows without exceedances contribute ``log(1 - V(u~) / t)`` each. A row
    with exceedance set ``K`` contributes the log of the censored derivative
    at ``z`` (exceeding coordinates at their normalized values, the others
    at their normalized thresholds), divided by ``t`` and by the scales of
    the exceeding coordinates. ``orders`` freezes the QMC integration
    order across calls (see ``fit_censored``).
    """
    if data.values.shape[1] != scheme.L:
        raise ParameterDomainError("data columns do not match the scheme")
    mu, sigma = model_mu_sigma(p, scheme)
    G = scheme.gamma(p)
    ut = (data.u - mu) / sigma
    Vu = exponent_measure_qmc(ut, G, qmc, orders)
    if not Vu / t < 1:
        raise InvalidConfigurationError(
            f"t^-1 V(u~) = {Vu / t:.3g} >= 1: thresholds too low for level t")
    n_exc = len(data.values)
    ll = (data.n - n_exc) * np.log1p(-Vu / t)
    if n_exc == 0:
        return float(ll)
    Z = (data.values - mu) / sigma
    exceed = data.values > data.u
    Zc = np.where(exceed, Z, ut)
    items, logs = [], np.empty(n_exc)
    for i in range(n_exc):
        K = np.flatnonzero(exceed[i])
        up, ch, lp = _censored_terms(Zc[i], G, K, orders, ("row", i))
        items.append((up, ch))
        logs[i] = lp - np.log(sigma[K]).sum()
    logs += _batched_cdf(items, qmc)
    return float(ll + logs.sum() - n_exc * np.log(t))


def fit_censored(data: ExceedanceData, scheme: AggregationScheme, t: float, init: ModelParams,
                 qmc: QmcSettings = QmcSettings(), max_evals: int = 3000, n_restarts: int = 1,
                 seed: int = 0, method: str = "bfgs", gtol: float = 1e-2) -> FitResult:
    """Maximize the censored likelihood over the transformed parameters.

    The QMC integration order of every term is frozen at the first
    evaluation, which makes the objective smooth in the parameters.
    ``method="bfgs"`` uses quasi-Newton steps on finite-difference
    gradients and falls back to Nelder-Mead if it makes no progress;
    ``method="nelder-mead"`` is derivative free throughout.
    """
    x0 = scheme.to_vector(init)
    if scheme.L < 2 and len(scheme.free_variogram):
        raise IdentifiabilityError("dependence parameters need at least two functionals")
    if method not in ("bfgs", "nelder-mead"):
        raise ParameterDomainError(f"unknown optimizer {method!r}")
    orders: dict = {}

    def obj(x):
        try:
            val = -censored_loglik(scheme.from_vector(x, init), scheme, data, t, qmc, orders)
        except (AggExtremesError, ValueError, np.linalg.LinAlgError, FloatingPointError):
            return _PENALTY
        return val if np.isfinite(val) else _PENALTY

    f0 = obj(x0)
    if f0 >= _PENALTY and "alpha" in scheme.free_variogram and init.variogram.alpha > _ALPHA_START:
        # alpha near 2 makes Gamma of many cells near singular; start inside
        init = replace(init, variogram=init.variogram.replace(alpha=_ALPHA_START))
        x0 = scheme.to_vector(init)
        f0 = obj(x0)
    if f0 >= _PENALTY:
        raise InvalidConfigurationError("censored likelihood undefined at the initial values")
    if method == "bfgs":
        res = minimize(obj, x0, method="BFGS",
                       options=dict(gtol=gtol, maxiter=max(1, max_evals // (x0.size + 1))))
        x, fx, n_it, n_ev = res.x, res.fun, res.nit, res.nfev
        conv = bool(res.success or np.max(np.abs(res.jac)) < gtol * 10)
        if not fx < f0 - 1e-8 or not conv:
            x, fx, conv, it2, ev2 = _nelder_mead(obj, x, max(max_evals - n_ev, 0), n_restarts,
                                                 seed, step=0.05, xatol=1e-4, fatol=1e-4)
            n_it, n_ev = n_it + it2, n_ev + ev2
    else:
        x, fx, conv, n_it, n_ev = _nelder_mead(obj, x0, max_evals, n_restarts, seed,
                                               xatol=1e-4, fatol=1e-4)
    p = scheme.normalize(scheme.from_vector(x, init))
    return FitResult(p, scheme.names, -fx, conv, n_it, n_ev, "censored_likelihood")


# ---------------------------------------------------------------------------
# jackknife


@dataclass
class JackknifeResult:
    sd: dict
    estimates: np.ndarray
    names: list
    n_failed: int


def jackknife(fit_fn: Callable[[np.ndarray], FitResult], n_items: int, n_blocks: int,
              block_size: int) -> JackknifeResult:
    """Delete-one-block jackknife standard deviations.

    ``fit_fn`` receives the positions of the items to drop and returns a
    FitResult. Blocks are consecutive runs of ``block_size`` items in the
    stored (time) order. Non-converged refits are excluded and counted.
    """
    if n_blocks < 2 or block_size < 1:
        raise ParameterDomainError("need at least two blocks of positive size")
    if n_blocks * block_size > n_items:
        raise ParameterDomainError("blocks exceed the number of events")
    rows, names, failed = [], None, 0
    for b in range(n_blocks):
        drop = np.arange(b * block_size, (b + 1) * block_size)
        try:
            res = fit_fn(drop)
        except AggExtremesError:
            failed += 1
            continue
        if not res.converged:
            failed += 1
            continue
        d = res.as_dict()
        names = list(d)
        rows.append([d[k] for k in names])
    if len(rows) < 2:
        raise IdentifiabilityError("fewer than two jackknife replicates converged")
    est = np.array(rows)
    g = len(rows)
    sd = np.sqrt((g - 1) / g * ((est - est.mean(0)) ** 2).sum(0))
    return JackknifeResult(dict(zip(names, sd)), est, names, failed)
