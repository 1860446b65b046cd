"""Simulation study comparing least squares and censored likelihood fits.

Setting: ``g x g`` unit cells on ``[0, g]^2``, power variogram, ``A = a0 +
a1 s1`` and ``B = b0 + b2 s2``. Each replicate draws ``n`` aggregated vectors
from the sum-normalized Husler-Reiss generator and fits

* least squares on Gumbel block-maxima estimates for the unit cells and
  larger squares of side 2..g (means of unit-cell values), level ``t =
  block``, with inverse-variance weights. ``ls_squares = "nested"`` uses
  one square per side anchored at the origin; ``"all"`` uses every
  position;
* the censored likelihood on the rows above a common rank cutoff chosen to
  keep ``n_exceed`` rows, level ``t = n``, started at the least-squares
  estimate.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .aggregation import CellAverage, CovariateBasis, Region
from .errors import AggExtremesError, ParameterDomainError
from .fit import (
    AggregationScheme,
    ExceedanceData,
    FitResult,
    ModelParams,
    QmcSettings,
    fit_censored,
    fit_least_squares,
    margin_arrays,
)
from .margins import fit_block_maxima
from .simulate import sample_aggregated
from .variogram import VariogramParams

log = logging.getLogger(__name__)

PARAMS = ("a_n", "a0", "a1", "b_n", "b0", "b2", "alpha", "lambda")
LABELS = {"a_n": "a(t)", "b_n": "b(t)"}


@dataclass
class SimStudyConfig:
    grid: int = 5
    n: int = 10_000
    alpha: float = 1.5
    lam: float = 1.0
    coef_A: tuple = (0.8, 0.4)
    coef_B: tuple = (-0.4, 0.8)
    block: int = 100
    n_exceed: int = 100
    reps: int = 50
    seed: int = 0
    qmc_points: int = 512
    ls_max_evals: int = 3000
    cens_max_evals: int = 1500
    init: str = "data"  # "data" or "truth"
    ls_squares: str = "nested"  # "nested" or "all"

    def __post_init__(self):
        if self.init not in ("data", "truth"):
            raise ParameterDomainError(f"unknown init {self.init!r}")
        if self.ls_squares not in ("nested", "all"):
            raise ParameterDomainError(f"unknown square set {self.ls_squares!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SimStudyConfig":
        d = dict(d)
        for k in ("coef_A", "coef_B"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def unit_cells(g: int):
    return [CellAverage(Region(i, i + 1, j, j + 1)) for j in range(g) for i in range(g)]


def squares(g: int, nested: bool = False):
    """Axis-aligned squares of integer side 1..g with the member unit-cell indices.

    All unit cells are always included. Larger squares are every position,
    or with ``nested`` only the one with its corner at the origin.
    """
    out = []
    for side in range(1, g + 1):
        pos = [(0, 0)] if nested and side > 1 else [(i, j) for j in range(g - side + 1)
                                                     for i in range(g - side + 1)]
        for i, j in pos:
            members = [(i + a) + g * (j + b) for b in range(side) for a in range(side)]
            out.append((CellAverage(Region(i, i + side, j, j + side)), members))
    return out


def bases():
    return (CovariateBasis.coordinates(["a0", "a1"], [0]),
            CovariateBasis.coordinates(["b0", "b2"], [1]))


def truth(cfg: SimStudyConfig, t: float) -> ModelParams:
    return ModelParams(1.0, np.log(t), cfg.coef_A, cfg.coef_B, VariogramParams(cfg.alpha, cfg.lam))


def rank_thresholds(Y: np.ndarray, n_exceed: int) -> np.ndarray:
    """Per-column thresholds at a common rank so that about ``n_exceed`` rows exceed.

    Rows are scored by their largest within-column rank; the cutoff is the
    score of the ``n_exceed + 1``-th best row, and column ``j`` is
    thresholded at its value of that rank.
    """
    n = Y.shape[0]
    ranks = Y.argsort(0).argsort(0) + 1
    score = ranks.max(axis=1)
    cutoff = np.sort(score)[::-1][min(n_exceed, n - 1)]
    return np.sort(Y, axis=0)[cutoff - 1]


def data_init(mu_hat, sigma_hat, t: float, ref: ModelParams) -> ModelParams:
    """Crude start: common scale, flat covariates, moderate dependence."""
    return ModelParams(float(np.median(sigma_hat)), float(mu_hat[0]), [1.0, 0.0], [0.0, 0.0],
                       ref.variogram.replace(alpha=1.0, lam=2.0))


class Study:
    """Schemes and generator shared by every replicate."""

    def __init__(self, cfg: SimStudyConfig):
        self.cfg = cfg
        bA, bB = bases()
        self.cells = unit_cells(cfg.grid)
        self.sq = squares(cfg.grid, nested=cfg.ls_squares == "nested")
        self.gen_scheme = AggregationScheme(self.cells, bA, bB)
        self.ls_scheme = AggregationScheme([s for s, _ in self.sq], bA, bB, dependence=False)
        self.cens_scheme = self.gen_scheme
        gen_truth = truth(cfg, 1.0 + 1e-12)
        self.G = self.gen_scheme.gamma(gen_truth)
        self.log_theta = self.gen_scheme.log_theta(gen_truth)
        self.ell_A = self.gen_scheme.ell_A(gen_truth)
        self.ell_B = self.gen_scheme.ell_B(gen_truth)
        self.members = [m for _, m in self.sq]

    def generate(self, rng) -> np.ndarray:
        return sample_aggregated(self.G, self.log_theta, self.ell_A, self.ell_B,
                                 self.cfg.n, rng).Y

    def fit_ls(self, Y: np.ndarray, init: ModelParams | None = None, seed: int = 0) -> FitResult:
        agg = np.column_stack([Y[:, m].mean(axis=1) for m in self.members])
        est = [fit_block_maxima(agg[:, j], self.cfg.block) for j in range(agg.shape[1])]
        mu, sig, v, w = margin_arrays(est)
        t = self.cfg.block
        if init is None:
            init = data_init(mu, sig, t, truth(self.cfg, t))
        return fit_least_squares(mu, sig, self.ls_scheme, init, v, w,
                                 max_evals=self.cfg.ls_max_evals, seed=seed)

    def fit_cens(self, Y: np.ndarray, init: ModelParams, seed: int = 0) -> FitResult:
        u = rank_thresholds(Y, self.cfg.n_exceed)
        data = ExceedanceData.from_matrix(Y, u)
        return fit_censored(data, self.cens_scheme, float(self.cfg.n), init,
                            QmcSettings(self.cfg.qmc_points, seed),
                            max_evals=self.cfg.cens_max_evals, seed=seed)

    def replicate(self, r: int):
        cfg = self.cfg
        rng = np.random.default_rng([cfg.seed, r])
        Y = self.generate(rng)
        ls_init = truth(cfg, cfg.block) if cfg.init == "truth" else None
        ls = self.fit_ls(Y, ls_init, seed=r)
        # move the least-squares estimate from level `block` to level n
        p = ls.params
        start = ModelParams(p.a_t, p.b_t + p.a_t * np.log(cfg.n / cfg.block), p.coef_A,
                            p.coef_B, p.variogram)
        if cfg.init == "truth":
            start = truth(cfg, cfg.n)
        cens = self.fit_cens(Y, start, seed=r)
        return ls, cens


def relative_errors(res: FitResult, ref: ModelParams) -> dict:
    est = res.as_dict()
    tru = res.names_to_values(ref)
    return {k: (est[k] - tru[k]) / abs(tru[k]) for k in PARAMS}


@dataclass
class StudyOutcome:
    table: dict
    errors: dict
    n_ok: int
    n_failed: int
    seconds: float
    estimates: dict = field(default_factory=dict)


def run_simstudy(cfg: SimStudyConfig, progress=None) -> StudyOutcome:
    """Run all replicates and return relative RMSE (in %) per method and parameter."""
    study = Study(cfg)
    errs = {"censored": [], "least_squares": []}
    ests = {"censored": [], "least_squares": []}
    failed = 0
    t0 = time.time()
    for r in range(cfg.reps):
        try:
            ls, cens = study.replicate(r)
        except AggExtremesError as exc:
            failed += 1
            log.warning("replicate %d failed: %s", r, exc)
            continue
        errs["least_squares"].append(relative_errors(ls, truth(cfg, cfg.block)))
        errs["censored"].append(relative_errors(cens, truth(cfg, cfg.n)))
        ests["least_squares"].append(ls.as_dict())
        ests["censored"].append(cens.as_dict())
        if progress is not None:
            progress(r, ls, cens, time.time() - t0)
    table = {}
    for method, rows in errs.items():
        if not rows:
            continue
        rmse = {k: 100 * float(np.sqrt(np.mean([row[k] ** 2 for row in rows]))) for k in PARAMS}
        rmse["mean"] = float(np.mean([rmse[k] for k in PARAMS]))
        table[method] = rmse
    return StudyOutcome(table, errs, cfg.reps - failed, failed, time.time() - t0, ests)


def write_table(outcome: StudyOutcome, path) -> Path:
    """CSV with one row per method and one column per parameter plus the mean."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method"] + [LABELS.get(k, k) for k in PARAMS] + ["mean"])
        names = {"censored": "Censored LLH", "least_squares": "Least squares"}
        for method, row in outcome.table.items():
            w.writerow([names[method]] + [f"{row[k]:.2f}" for k in PARAMS] + [f"{row['mean']:.2f}"])
    return path


def config_dict(cfg: SimStudyConfig) -> dict:
    return asdict(cfg)
