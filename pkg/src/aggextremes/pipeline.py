"""Data handling and the end-to-end downscaling pipeline.

Input contract: a long CSV with header ``date,cell_id,value`` (ISO dates,
one row per day and cell, empty or ``NA`` for missing values) and a geometry
JSON ``{"cells": [{"id", "xmin", "xmax", "ymin", "ymax", "covariates": {...}}],
"raster": {...}}``. The optional raster block holds fine-grid covariates as
``{"x": [...], "y": [...], "layers": {"alt": [[...], ...], ...}}`` with
layers indexed ``[iy][ix]``.

Cells are always stored sorted by id so that the first cell, which anchors
the identifiability constraints, does not depend on file order.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregation import CellAverage, CovariateBasis, PointEval, Region
from .errors import AggExtremesError, IdentifiabilityError, ParameterDomainError, SchemaError
from .fit import (
    AggregationScheme,
    ExceedanceData,
    FitResult,
    ModelParams,
    QmcSettings,
    fit_censored,
    fit_least_squares,
    margin_arrays,
    model_mu_sigma,
)
from .hr_core import chi_pair
from .margins import fit_censored_pot
from .variogram import VariogramParams

log = logging.getLogger(__name__)

HEADER = ["date", "cell_id", "value"]
MISSING = {"", "na", "nan"}


# ---------------------------------------------------------------------------
# configuration and data types


@dataclass
class StudyConfig:
    """Settings of the downscaling pipeline.

    ``months`` empty keeps every month. ``t`` defaults to the number of
    retained days. ``jackknife_block_size`` defaults to the number of
    events divided by ``jackknife_blocks``; ``jackknife_blocks = 0``
    disables the jackknife.
    """

    months: tuple = ()
    quantile: float = 0.98
    gap_days: int = 5
    t: float | None = None
    jackknife_blocks: int = 19
    jackknife_block_size: int | None = None
    covariates_A: tuple = ()
    covariates_B: tuple = ("alt", "lon", "lat")
    free_variogram: tuple = ("alpha", "lam", "eta", "aniso")
    init_variogram: dict = field(default_factory=lambda: {"alpha": 1.0, "lam": None,
                                                          "eta": 0.0, "aniso": 1.1})
    qmc_points: int = 512
    max_evals: int = 3000
    jackknife_max_evals: int = 1000
    seed: int = 0
    obs_per_year: float = 62.0
    return_periods: tuple = (50.0, 100.0)
    workers: int = 1
    out_dir: str = "out"

    def __post_init__(self):
        self.months = tuple(int(m) for m in self.months)
        self.covariates_A = tuple(self.covariates_A)
        self.covariates_B = tuple(self.covariates_B)
        self.free_variogram = tuple(self.free_variogram)
        self.return_periods = tuple(float(T) for T in self.return_periods)
        if not 0.5 < self.quantile < 1:
            raise ParameterDomainError("threshold quantile must lie in (0.5, 1)")
        if self.gap_days < 0:
            raise ParameterDomainError("declustering gap must be nonnegative")
        if any(not 1 <= m <= 12 for m in self.months):
            raise ParameterDomainError("months must be in 1..12")
        if self.workers < 1:
            raise ParameterDomainError("workers must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise SchemaError(f"unknown configuration keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "StudyConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Cell:
    id: str
    region: Region
    covariates: dict


@dataclass
class IngestReport:
    rows_read: int = 0
    rejected: list = field(default_factory=list)  # (line number, reason)
    days_missing: int = 0
    days_out_of_season: int = 0
    days_kept: int = 0

    def lines(self) -> list[str]:
        out = [f"rows read: {self.rows_read}", f"rows rejected: {len(self.rejected)}"]
        out += [f"  line {ln}: {why}" for ln, why in self.rejected]
        out += [f"days dropped for missing cells: {self.days_missing}",
                f"days outside the month filter: {self.days_out_of_season}",
                f"days kept: {self.days_kept}"]
        return out


@dataclass
class Geometry:
    cells: list
    raster: dict | None = None

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.cells]

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        lo = np.min([c.region.lo for c in self.cells], axis=0)
        hi = np.max([c.region.hi for c in self.cells], axis=0)
        return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])

    def basis(self, names: Sequence[str], intercept: str) -> CovariateBasis:
        """Intercept plus the named covariates (raster lookups when available)."""
        names = list(names)
        if not names:
            return CovariateBasis.constant(intercept)
        r = self.raster
        if r is not None and all(n in r.get("layers", {}) for n in names):
            return CovariateBasis.raster([intercept] + names, r["x"], r["y"],
                                         [r["layers"][n] for n in names])
        missing = [n for c in self.cells for n in names if n not in c.covariates]
        if missing:
            raise SchemaError(f"cells lack covariates {sorted(set(missing))}")
        vals = [[c.covariates[n] for n in names] for c in self.cells]
        return CovariateBasis.piecewise([intercept] + names, [c.region for c in self.cells], vals)

    @classmethod
    def from_dict(cls, doc: dict) -> "Geometry":
        try:
            cells = [Cell(str(c["id"]), Region(float(c["xmin"]), float(c["xmax"]),
                                               float(c["ymin"]), float(c["ymax"])),
                          {k: float(v) for k, v in c.get("covariates", {}).items()})
                     for c in doc["cells"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed geometry: {exc}") from None
        if len({c.id for c in cells}) != len(cells):
            raise SchemaError("duplicate cell ids in geometry")
        return cls(sorted(cells, key=lambda c: _id_key(c.id)), doc.get("raster"))

    @classmethod
    def from_json(cls, path) -> "Geometry":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class AggDataset:
    """Daily aggregates, one column per cell (cells sorted by id)."""

    values: np.ndarray
    dates: np.ndarray  # datetime64[D], strictly increasing
    geometry: Geometry
    report: IngestReport = field(default_factory=IngestReport)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, float))
        self.dates = np.asarray(self.dates, "datetime64[D]")
        if self.values.shape != (self.dates.size, len(self.geometry.cells)):
            raise SchemaError("values must have one row per date and one column per cell")
        if not np.all(np.isfinite(self.values)):
            raise SchemaError("dataset contains missing values")
        if np.any(np.diff(self.dates.astype(np.int64)) <= 0):
            raise SchemaError("dates must be strictly increasing")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def L(self) -> int:
        return self.values.shape[1]

    def columns(self, idx) -> "AggDataset":
        cells = [self.geometry.cells[i] for i in idx]
        return AggDataset(self.values[:, idx], self.dates, Geometry(cells, self.geometry.raster),
                          self.report)


def _id_key(s: str):
    return (0, int(s), s) if s.lstrip("-").isdigit() else (1, 0, s)


# ---------------------------------------------------------------------------
# ingestion


def ingest(data_path, geometry, config: StudyConfig = StudyConfig()) -> AggDataset:
    """Read a long CSV into an AggDataset.

    Malformed rows (wrong field count, bad date or number, unknown cell,
    duplicate date-cell pair) are rejected with their line number. Days
    with a missing cell are dropped, then the month filter is applied.
    Dates must be non-decreasing in the file.
    """
    geo = geometry if isinstance(geometry, Geometry) else Geometry.from_json(geometry)
    col = {cid: j for j, cid in enumerate(geo.ids)}
    report = IngestReport()
    table: dict = {}
    last = None
    with open(data_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != HEADER:
            raise SchemaError(f"expected header {','.join(HEADER)}, got {header}")
        for row in reader:
            line = reader.line_num
            if not row or all(not x.strip() for x in row):
                continue
            report.rows_read += 1
            if len(row) != 3:
                report.rejected.append((line, f"expected 3 fields, got {len(row)}"))
                continue
            ds, cid, vs = (x.strip() for x in row)
            try:
                d = date.fromisoformat(ds)
            except ValueError:
                report.rejected.append((line, f"bad date {ds!r}"))
                continue
            if cid not in col:
                report.rejected.append((line, f"unknown cell {cid!r}"))
                continue
            if vs.lower() in MISSING:
                v = np.nan
            else:
                try:
                    v = float(vs)
                except ValueError:
                    report.rejected.append((line, f"bad value {vs!r}"))
                    continue
                if not math.isfinite(v):
                    report.rejected.append((line, f"non-finite value {vs!r}"))
                    continue
            if last is not None and d < last:
                raise SchemaError(f"line {line}: dates are not in increasing order")
            last = d
            day = table.setdefault(d, {})
            if col[cid] in day:
                report.rejected.append((line, f"duplicate entry for {ds}, cell {cid}"))
                continue
            day[col[cid]] = v
    days = sorted(table)
    X = np.full((len(days), len(col)), np.nan)
    for i, d in enumerate(days):
        for j, v in table[d].items():
            X[i, j] = v
    complete = np.all(np.isfinite(X), axis=1)
    report.days_missing = int((~complete).sum())
    dates = np.array(days, "datetime64[D]")
    keep = complete
    if config.months:
        month = np.array([d.month for d in days], int)
        in_season = np.isin(month, config.months)
        report.days_out_of_season = int((complete & ~in_season).sum())
        keep = complete & in_season
    report.days_kept = int(keep.sum())
    return AggDataset(X[keep], dates[keep], geo, report)


def export(ds: AggDataset, path) -> Path:
    """Write the dataset back to the long CSV format (values round-trip exactly)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for d, row in zip(ds.dates.astype(str), ds.values):
            for cid, v in zip(ds.geometry.ids, row):
                w.writerow([d, cid, repr(float(v))])
    return path


# ---------------------------------------------------------------------------
# declustering


def decluster(days, scores, gap_days: int) -> np.ndarray:
    """Greedy runs declustering.

    Repeatedly keep the highest-scoring remaining row and discard every row
    less than ``gap_days`` days from it. Ties go to the earlier row. Returns
    the kept positions in time order; kept days are pairwise at least
    ``gap_days`` apart.
    """
    if gap_days < 0:
        raise ParameterDomainError("gap must be nonnegative")
    days = np.asarray(days)
    if np.issubdtype(days.dtype, np.datetime64):
        days = days.astype("datetime64[D]").astype(np.int64)
    days = np.asarray(days, np.int64)
    scores = np.asarray(scores, float)
    if days.shape != scores.shape:
        raise ParameterDomainError("one score per day required")
    if gap_days == 0:
        return np.arange(days.size)
    alive = np.ones(days.size, bool)
    kept = []
    for i in np.argsort(-scores, kind="stable"):
        if not alive[i]:
            continue
        kept.append(i)
        alive &= np.abs(days - days[i]) >= gap_days
    return np.sort(np.array(kept, int))


# ---------------------------------------------------------------------------
# the pipeline


def scheme_for(geo: Geometry, cfg: StudyConfig, dependence: bool = True,
               free_variogram: Sequence[str] | None = None,
               targets: np.ndarray | None = None) -> AggregationScheme:
    """Cell averages (plus optional point targets) with the configured bases."""
    funcs = [CellAverage(c.region) for c in geo.cells]
    if targets is not None:
        funcs += [PointEval(tuple(map(float, p))) for p in np.atleast_2d(targets)]
    fv = cfg.free_variogram if free_variogram is None else free_variogram
    return AggregationScheme(funcs, geo.basis(cfg.covariates_A, "a0"),
                             geo.basis(cfg.covariates_B, "b0"), fv, dependence=dependence)


def initial_variogram(geo: Geometry, cfg: StudyConfig) -> VariogramParams:
    d = dict(cfg.init_variogram)
    if d.get("lam") is None:
        sides = [np.max(c.region.hi - c.region.lo) for c in geo.cells]
        d["lam"] = float(np.median(sides))
    return VariogramParams(**{k: float(v) for k, v in d.items()})


@dataclass
class PipelineResult:
    fit: FitResult
    ls_fit: FitResult
    margins: list
    thresholds: np.ndarray
    events: np.ndarray  # row positions of the declustered events
    t: float
    scheme: AggregationScheme
    report: str
    jackknife_failed: int = 0


class StageError(AggExtremesError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc


def _stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except StageError:
        raise
    except (AggExtremesError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def event_rows(ds: AggDataset, u: np.ndarray, sigma: np.ndarray, gap_days: int):
    """Declustered rows with at least one exceedance, scored by max_j (y_j - u_j) / sigma_j."""
    exc = np.flatnonzero((ds.values > u).any(axis=1))
    score = ((ds.values[exc] - u) / sigma).max(axis=1)
    return exc[decluster(ds.dates[exc], score, gap_days)], exc.size


def pipeline_fit(ds: AggDataset, cfg: StudyConfig = StudyConfig()) -> PipelineResult:
    """Marginal fits, least-squares start, censored likelihood and jackknife."""
    order = sorted(range(ds.L), key=lambda j: _id_key(ds.geometry.ids[j]))
    ds = ds.columns(order)
    if ds.L < 2:
        raise StageError("least_squares", IdentifiabilityError(
            "a single aggregate cannot identify the dependence parameters"))
    t = float(cfg.t) if cfg.t is not None else float(ds.n)
    u = np.quantile(ds.values, cfg.quantile, axis=0)
    margins = _stage("margins", lambda: [fit_censored_pot(ds.values[:, j], u[j], t)
                                         for j in range(ds.L)])
    mu, sig, v, w = margin_arrays(margins)

    vg = initial_variogram(ds.geometry, cfg)
    ls_scheme = _stage("scheme", scheme_for, ds.geometry, cfg, False, ())
    kA, kB = len(ls_scheme.basis_A), len(ls_scheme.basis_B)
    init = ModelParams(float(np.median(sig)), float(mu[0]), [1.0] + [0.0] * (kA - 1),
                       [0.0] * kB, vg)
    ls = _stage("least_squares", fit_least_squares, mu, sig, ls_scheme, init, v, w,
                seed=cfg.seed)

    scheme = _stage("scheme", scheme_for, ds.geometry, cfg)
    events, n_exc = event_rows(ds, u, sig, cfg.gap_days)
    data = ExceedanceData(ds.values[events], ds.n - (n_exc - events.size), u, events)
    qmc = QmcSettings(cfg.qmc_points, cfg.seed)
    cens = _stage("censored", fit_censored, data, scheme, t, ls.params, qmc,
                  max_evals=cfg.max_evals, seed=cfg.seed)

    failed = 0
    if cfg.jackknife_blocks:
        nb = cfg.jackknife_blocks
        bs = cfg.jackknife_block_size or max(events.size // nb, 1)

        def refit(drop):
            return fit_censored(data.drop(drop), scheme, t, cens.params, qmc,
                                max_evals=cfg.jackknife_max_evals, seed=cfg.seed)

        jk = _stage("jackknife", jackknife_parallel, refit, events.size, nb, bs, cfg.workers)
        cens.jackknife_sd = {k: float(s) for k, s in jk.sd.items()}
        failed = jk.n_failed
    report = fit_report(cens, ds, t, events.size, failed, scheme.free_names)
    return PipelineResult(cens, ls, margins, u, events, t, scheme, report, failed)


def jackknife_parallel(fit_fn, n_items: int, n_blocks: int, block_size: int, workers: int = 1):
    """Block jackknife with refits spread over ``workers`` threads."""
    from .fit import JackknifeResult, jackknife

    if workers <= 1:
        return jackknife(fit_fn, n_items, n_blocks, block_size)
    drops = [np.arange(b * block_size, (b + 1) * block_size) for b in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda d: _safe(fit_fn, d), drops))
    it = iter(results)
    return jackknife(lambda _drop: next(it), n_items, n_blocks, block_size)


def _safe(fn, drop):
    try:
        return fn(drop)
    except AggExtremesError as exc:
        return _Failed(exc)


class _Failed:
    def __init__(self, exc):
        self.exc = exc
        self.converged = False


def fit_report(res: FitResult, ds: AggDataset, t: float, n_events: int, failed: int = 0,
               free: Sequence[str] | None = None) -> str:
    """Plain-text table: parameter names, estimates and jackknife standard deviations.

    ``free`` restricts the columns (default: all but the two intercepts).
    """
    est = res.as_dict()
    names = list(free) if free is not None else [k for k in est if k not in ("a0", "b0")]
    width = max(10, *(len(k) + 2 for k in names))
    head = "".join(f"{k:>{width}}" for k in names)
    row = "".join(f"{est[k]:>{width}.3f}" for k in names)
    lines = [f"cells: {ds.L}  days: {ds.n}  events: {n_events}  level t: {t:g}",
             f"optimizer: {res.method}  converged: {res.converged}  "
             f"log-likelihood: {res.objective:.3f}",
             "", f"{'':<20}" + head, f"{'Estimate':<20}" + row]
    if res.jackknife_sd:
        sd = "".join(f"{res.jackknife_sd.get(k, float('nan')):>{width}.3f}" for k in names)
        lines.append(f"{'Standard deviation':<20}" + sd)
        lines.append(f"jackknife refits excluded: {failed}")
    return "\n".join(lines) + "\n"


def write_fit(res: PipelineResult, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = json.loads(res.fit.to_json())
    doc["t"] = res.t
    doc["thresholds"] = [float(x) for x in res.thresholds]
    doc["n_events"] = int(res.events.size)
    fj = out / "fit.json"
    fj.write_text(json.dumps(doc, indent=2))
    fr = out / "report.txt"
    fr.write_text(res.report)
    return fj, fr


def load_fit(path) -> tuple[ModelParams, dict]:
    text = Path(path).read_text()
    return FitResult.params_from_json(text), json.loads(text)


# ---------------------------------------------------------------------------
# return levels


def raster_points(geo: Geometry, nx: int | None = None, ny: int | None = None):
    """Pixel centres of the covariate raster, or of a regular ``nx`` by ``ny`` grid."""
    if nx is None and ny is None and geo.raster is not None:
        x = np.asarray(geo.raster["x"], float)
        y = np.asarray(geo.raster["y"], float)
    else:
        x0, x1, y0, y1 = geo.bounds
        nx = nx or 30
        ny = ny or 30
        x = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
        y = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    X, Y = np.meshgrid(x, y)
    return np.column_stack([X.ravel(), Y.ravel()]), x.size, y.size


def return_levels(p: ModelParams, basis_A: CovariateBasis, basis_B: CovariateBasis, points,
                  periods: Sequence[float], t: float, obs_per_year: float = 62.0) -> dict:
    """Point return levels ``B(s) + A(s) (b(t) + a(t) log(obs_per_year T / t))``.

    The point tail at level ``t`` is ``exp(-(x - b_s) / a_s) / t`` with
    ``a_s = A(s) a(t)`` and ``b_s = B(s) + A(s) b(t)``; the T-year level is
    exceeded on average once in ``obs_per_year * T`` observations.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    if not (t > 0 and obs_per_year > 0):
        raise ParameterDomainError("t and obs_per_year must be positive")
    A = basis_A(pts) @ np.array(p.coef_A)
    B = basis_B(pts) @ np.array(p.coef_B)
    out = {}
    for T in periods:
        if not T > 0:
            raise ParameterDomainError("return periods must be positive")
        out[float(T)] = B + A * (p.b_t + p.a_t * np.log(obs_per_year * T / t))
    return out


def normalized_params(p: ModelParams, geo: Geometry, cfg: StudyConfig) -> ModelParams:
    """Apply the identifiability constraints of the geometry's reference cell."""
    return scheme_for(geo, cfg, dependence=False, free_variogram=()).normalize(p)


# ---------------------------------------------------------------------------
# diagnostics


def qq_data(ds: AggDataset, p: ModelParams, scheme: AggregationScheme, u, t: float,
            jackknife_sd: dict | None = None, names: dict | None = None, n_boot: int = 500,
            seed: int = 0) -> list[dict]:
    """Empirical vs model quantiles of every cell's exceedances with bootstrap bands.

    Model quantile of the ``i``-th largest of ``n`` values: ``mu - sigma
    log(t p_i)`` with ``p_i = i / (n + 1)``. Bands come from ``n_boot``
    parameter draws with independent normal perturbations of size the
    jackknife standard deviations, each followed by a parametric resample of
    the top order statistics.
    """
    mu, sigma = model_mu_sigma(p, scheme)
    rng = np.random.default_rng(seed)
    draws = _param_draws(p, scheme, jackknife_sd, names, n_boot, rng)
    rows = []
    for j in range(ds.L):
        x = np.sort(ds.values[:, j])[::-1]
        k = int((x > u[j]).sum())
        if k == 0:
            continue
        prob = np.arange(1, k + 1) / (ds.n + 1)
        model = mu[j] - sigma[j] * np.log(t * prob)
        # top-k order statistics of n draws: tail probabilities are Gamma_i / n
        gam = np.cumsum(rng.exponential(size=(len(draws), k)), axis=1) / ds.n
        sims = np.array([m_d[j] - s_d[j] * np.log(t * g) for (m_d, s_d), g in zip(draws, gam)])
        lo, hi = np.quantile(sims, [0.025, 0.975], axis=0)
        for i in range(k):
            rows.append({"cell": ds.geometry.ids[j], "rank": i + 1, "empirical": float(x[i]),
                         "model": float(model[i]), "lower": float(lo[i]), "upper": float(hi[i])})
    return rows


def _param_draws(p, scheme, sd, names, n, rng):
    if not sd or n == 0:
        return [model_mu_sigma(p, scheme)] * max(n, 1)
    out = []
    for _ in range(n):
        a_t = p.a_t + rng.normal() * sd.get("a_n", 0.0)
        b_t = p.b_t + rng.normal() * sd.get("b_n", 0.0)
        cA = [c + rng.normal() * sd.get(k, 0.0) for c, k in zip(p.coef_A, names["A"])]
        cB = [c + rng.normal() * sd.get(k, 0.0) for c, k in zip(p.coef_B, names["B"])]
        try:
            q = ModelParams(max(a_t, 1e-6), b_t, cA, cB, p.variogram)
            out.append(model_mu_sigma(q, scheme))
        except AggExtremesError:
            continue
    return out


def extremogram_data(ds: AggDataset, G, q: float = 0.98, include_self: bool = False) -> list[dict]:
    """Empirical and model pairwise extremograms against centroid distance.

    Empirical: ``P(Y_k > q_k | Y_j > q_j)`` with empirical marginal
    ``q``-quantiles; model: ``chi_pair(Gamma_jk)``. ``se`` is the binomial
    standard error of the model value given the number of conditioning
    exceedances.
    """
    X = ds.values
    u = np.quantile(X, q, axis=0)
    E = X > u
    cen = np.array([c.region.centroid for c in ds.geometry.cells])
    rows = []
    for j in range(ds.L):
        for k in range(j if include_self else j + 1, ds.L):
            nj = int(E[:, j].sum())
            emp = float((E[:, j] & E[:, k]).sum() / nj) if nj else float("nan")
            chi = float(chi_pair(G[j, k]))
            d = cen[k] - cen[j]
            rows.append({"cell_j": ds.geometry.ids[j], "cell_k": ds.geometry.ids[k],
                         "distance": float(np.hypot(*d)),
                         "direction": float(np.degrees(np.arctan2(d[1], d[0]))),
                         "empirical": emp, "model": chi,
                         "se": float(np.sqrt(chi * (1 - chi) / nj)) if nj else float("nan"),
                         "n_cond": nj})
    return rows


def write_rows(rows: list[dict], path) -> Path:
    """Tidy CSV, one row per record."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return path


def config_dict(cfg: StudyConfig) -> dict:
    return asdict(cfg)


# ---------------------------------------------------------------------------
# synthetic data


def synthetic_dataset(p: ModelParams, geo: Geometry, cfg: StudyConfig, n_years: int,
                      t: float | None = None, seed=0, first_year: int = 1950) -> AggDataset:
    """Daily aggregates whose joint tail follows the model exactly.

    Rows are sum-normalized Husler-Reiss draws mapped to data units at
    level ``t`` (default: the number of rows); every marginal tail above
    the ``1 - 1/L`` quantile is exactly the model tail. Days run through
    the configured months (all months when none are set).
    """
    from .simulate import sample_model

    months = cfg.months or tuple(range(1, 13))
    days = [d for y in range(first_year, first_year + n_years)
            for d in _days_in(y, months)]
    scheme = scheme_for(geo, cfg)
    t = float(len(days)) if t is None else float(t)
    Y = sample_model(scheme.normalize(p), scheme, len(days), t, seed)
    return AggDataset(Y, np.array(days, "datetime64[D]"), geo)


def _days_in(year: int, months):
    start = np.datetime64(f"{year}-01-01")
    all_days = start + np.arange(366 if year % 4 == 0 and (year % 100 or year % 400 == 0)
                                 else 365)
    m = all_days.astype("datetime64[M]").astype(int) % 12 + 1
    return [str(d) for d in all_days[np.isin(m, months)]]
