"""Command line front end.

Verbs: ``ingest-check``, ``fit``, ``return-levels``, ``simulate``,
``diagnostics``, ``simstudy``. Every option can also be given in a JSON file
passed with ``--config``; keys are option names with dashes replaced by
underscores, and the pipeline settings of ``StudyConfig`` live under the
key ``"study"``. Command line values win over the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import AggExtremesError
from .pipeline import (
    AggDataset,
    Geometry,
    StudyConfig,
    extremogram_data,
    ingest,
    load_fit,
    normalized_params,
    pipeline_fit,
    qq_data,
    raster_points,
    return_levels,
    scheme_for,
    write_fit,
    write_rows,
)
from .simstudy import SimStudyConfig, run_simstudy, write_table
from .simulate import conditional_simulate, unconditional_extreme_simulate, write_raster_binary, \
    write_raster_csv

log = logging.getLogger("aggextremes")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aggextremes", description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, help="JSON file with option values")
    ap.add_argument("--workers", type=int, help="cap on parallel workers")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def data_opts(p):
        p.add_argument("--data", type=Path)
        p.add_argument("--geometry", type=Path)

    p = sub.add_parser("ingest-check", help="parse and validate input files")
    data_opts(p)

    p = sub.add_parser("fit", help="run the full estimation pipeline")
    data_opts(p)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("return-levels", help="point return-level rasters")
    p.add_argument("--fit", type=Path)
    p.add_argument("--geometry", type=Path)
    p.add_argument("--periods", type=float, nargs="+")
    p.add_argument("--obs-per-year", type=float)
    p.add_argument("--t", type=float, help="level of the fit (default: stored in the fit)")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--format", choices=["csv", "binary"])
    p.add_argument("--out", type=Path)

    p = sub.add_parser("simulate", help="conditional or unconditional point simulation")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--conditional", action="store_const", const="conditional", dest="mode")
    mode.add_argument("--unconditional", action="store_const", const="unconditional",
                      dest="mode")
    data_opts(p)
    p.add_argument("--fit", type=Path)
    p.add_argument("--date", help="day to condition on (default: largest event)")
    p.add_argument("--n-draws", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--format", choices=["csv", "binary"])
    p.add_argument("--out", type=Path)

    p = sub.add_parser("diagnostics", help="QQ and extremogram tables")
    data_opts(p)
    p.add_argument("--fit", type=Path)
    p.add_argument("--n-boot", type=int)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("simstudy", help="simulation study RMSE table")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    return ap


DEFAULTS = {"out": None, "periods": None, "obs_per_year": None, "t": None, "nx": None,
            "ny": None, "format": "csv", "mode": None, "date": None, "n_draws": 100, "seed": None,
            "n_boot": 500, "reps": None, "workers": None, "data": None, "geometry": None,
            "fit": None}


def _merge(args: argparse.Namespace) -> tuple[dict, dict]:
    """Options (file values under command line values) and the study section."""
    doc = json.loads(args.config.read_text()) if args.config else {}
    study = dict(doc.pop("study", {}))
    opts = dict(DEFAULTS)
    opts.update({k.replace("-", "_"): v for k, v in doc.items()})
    for k, v in vars(args).items():
        if v is not None and k != "config":
            opts[k] = v
    if opts.get("workers") is not None:
        study["workers"] = int(opts["workers"])
    return opts, study


def _need(opts, *keys):
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise SystemExit("missing options: " + ", ".join("--" + k.replace("_", "-")
                                                        for k in missing))


def _load(opts, cfg) -> AggDataset:
    _need(opts, "data", "geometry")
    return ingest(opts["data"], opts["geometry"], cfg)


def cmd_ingest_check(opts, cfg):
    ds = _load(opts, cfg)
    print("\n".join(ds.report.lines()))
    print(f"cells: {ds.L} ({', '.join(ds.geometry.ids)})")
    if ds.n:
        print(f"period: {ds.dates[0]} to {ds.dates[-1]}")
    return 0 if not ds.report.rejected else 1


def cmd_fit(opts, cfg):
    ds = _load(opts, cfg)
    res = pipeline_fit(ds, cfg)
    out = Path(opts["out"] or cfg.out_dir)
    fj, fr = write_fit(res, out)
    print(res.report, end="")
    print(f"wrote {fj} and {fr}")
    return 0


def _write_raster(fmt, path, pts, draws, nx, ny, geo, seed=None):
    if fmt == "binary":
        write_raster_binary(path, draws, nx, ny, geo.bounds, seed)
    else:
        write_raster_csv(path, pts, draws)


def cmd_return_levels(opts, cfg):
    _need(opts, "fit", "geometry")
    geo = Geometry.from_json(opts["geometry"])
    p, doc = load_fit(opts["fit"])
    t = opts["t"] or doc.get("t")
    if t is None:
        raise SystemExit("the level t is neither in the fit file nor given with --t")
    periods = opts["periods"] or list(cfg.return_periods)
    opy = opts["obs_per_year"] or cfg.obs_per_year
    cfg.covariates_A = tuple(doc["basis_A"][1:])
    cfg.covariates_B = tuple(doc["basis_B"][1:])
    p = normalized_params(p, geo, cfg)
    pts, nx, ny = raster_points(geo, opts["nx"], opts["ny"])
    levels = return_levels(p, geo.basis(cfg.covariates_A, doc["basis_A"][0]),
                           geo.basis(cfg.covariates_B, doc["basis_B"][0]), pts, periods,
                           float(t), opy)
    out = Path(opts["out"] or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "bin" if opts["format"] == "binary" else "csv"
    for T, x in levels.items():
        path = out / f"return_level_{T:g}y.{ext}"
        _write_raster(opts["format"], path, pts, x[None], nx, ny, geo)
        print(f"T={T:g}y: min {x.min():.3f} max {x.max():.3f} -> {path}")
    return 0


def cmd_simulate(opts, cfg):
    _need(opts, "fit", "geometry", "mode")
    geo = Geometry.from_json(opts["geometry"])
    p, doc = load_fit(opts["fit"])
    cfg.covariates_A = tuple(doc["basis_A"][1:])
    cfg.covariates_B = tuple(doc["basis_B"][1:])
    p = normalized_params(p, geo, cfg)
    pts, nx, ny = raster_points(geo, opts["nx"], opts["ny"])
    scheme = scheme_for(geo, cfg, targets=pts)
    L = len(geo.cells)
    seed = cfg.seed if opts["seed"] is None else opts["seed"]
    out = Path(opts["out"] or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "bin" if opts["format"] == "binary" else "csv"
    if opts["mode"] == "conditional":
        ds = _load(opts, cfg)
        mu, sig = _cell_margins(p, geo, cfg)
        z = (ds.values - mu) / sig
        if opts["date"]:
            hit = np.flatnonzero(ds.dates == np.datetime64(opts["date"], "D"))
            if not hit.size:
                raise SystemExit(f"date {opts['date']} not in the data")
            row = int(hit[0])
        else:
            row = int(np.argmax(z.max(axis=1)))
        J = int(np.argmax(z[row]))
        draw = conditional_simulate(p, scheme, ds.values[row], J, opts["n_draws"], seed)
        path = out / f"conditional_{ds.dates[row]}.{ext}"
        _write_raster(opts["format"], path, pts, draw.values, nx, ny, geo, seed)
        print(f"conditioned on {ds.dates[row]} (cell {geo.ids[J]}), "
              f"{opts['n_draws']} draws -> {path}")
    else:
        values, _, rate = unconditional_extreme_simulate(p, scheme, L, opts["n_draws"], seed)
        path = out / f"unconditional.{ext}"
        _write_raster(opts["format"], path, pts, values[:, L:], nx, ny, geo, seed)
        print(f"{opts['n_draws']} events (acceptance {rate:.3f}) -> {path}")
    return 0


def _cell_margins(p, geo, cfg):
    from .fit import model_mu_sigma

    return model_mu_sigma(p, scheme_for(geo, cfg, dependence=False, free_variogram=()))


def cmd_diagnostics(opts, cfg):
    _need(opts, "fit")
    ds = _load(opts, cfg)
    p, doc = load_fit(opts["fit"])
    cfg.covariates_A = tuple(doc["basis_A"][1:])
    cfg.covariates_B = tuple(doc["basis_B"][1:])
    scheme = scheme_for(ds.geometry, cfg)
    p = scheme.normalize(p)
    u = np.asarray(doc.get("thresholds") or np.quantile(ds.values, cfg.quantile, axis=0))
    t = float(doc.get("t") or ds.n)
    names = {"A": doc["basis_A"], "B": doc["basis_B"]}
    qq = qq_data(ds, p, scheme, u, t, doc.get("jackknife_sd"), names, opts["n_boot"], cfg.seed)
    ex = extremogram_data(ds, scheme.gamma(p), cfg.quantile)
    out = Path(opts["out"] or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    a = write_rows(qq, out / "qq.csv")
    b = write_rows(ex, out / "extremogram.csv")
    print(f"wrote {a} ({len(qq)} rows) and {b} ({len(ex)} rows)")
    return 0


def cmd_simstudy(opts, study_doc):
    d = dict(study_doc)
    for k in ("reps", "seed"):
        if opts.get(k) is not None:
            d[k] = opts[k]
    d.pop("workers", None)
    cfg = SimStudyConfig.from_dict(d)
    outcome = run_simstudy(cfg, lambda r, ls, c, s: log.info("replicate %d done (%.0fs)", r, s))
    path = write_table(outcome, opts["out"] or "simstudy.csv")
    for method, row in outcome.table.items():
        print(f"{method}: mean relative RMSE {row['mean']:.2f}%")
    print(f"replicates ok {outcome.n_ok}, failed {outcome.n_failed}; table -> {path}")
    return 0


COMMANDS = {"ingest-check": cmd_ingest_check, "fit": cmd_fit,
            "return-levels": cmd_return_levels, "simulate": cmd_simulate,
            "diagnostics": cmd_diagnostics}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    opts, study = _merge(args)
    try:
        if args.verb == "simstudy":
            return cmd_simstudy(opts, study)
        return COMMANDS[args.verb](opts, StudyConfig.from_dict(study))
    except AggExtremesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
