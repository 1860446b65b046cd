"""Point return-level maps from a stored fit.

Usage: python scripts/return_level_maps.py [--fit configs/temperature_fit.json]
       [--geometry configs/geometry_12cells.json] [--out out/maps]

Writes one CSV raster per return period (columns draw, x, y, value) and
prints the range of each map.
"""
import argparse
from pathlib import Path

from aggextremes.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fit", type=Path, default=ROOT / "configs" / "temperature_fit.json")
    ap.add_argument("--geometry", type=Path, default=ROOT / "configs" / "geometry_12cells.json")
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "pipeline.json")
    ap.add_argument("--periods", type=float, nargs="+", default=[50, 100])
    ap.add_argument("--out", type=Path, default=Path("out") / "maps")
    args = ap.parse_args(argv)
    return cli(["--config", str(args.config), "return-levels", "--fit", str(args.fit),
                "--geometry", str(args.geometry), "--periods", *map(str, args.periods),
                "--out", str(args.out)])


if __name__ == "__main__":
    raise SystemExit(main())
