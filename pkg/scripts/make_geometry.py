"""Write the illustrative 12-cell geometry used by the example configs.

Four by three cells of 0.25 degrees (about 20.4 km by 27.8 km) with a
smooth synthetic altitude field (km), longitude and latitude (degrees). The
values are invented for demonstration and do not describe a real region.
"""
import json
import sys
from pathlib import Path

import numpy as np

NX, NY = 4, 3
DX, DY = 20.4, 27.8
LON0, LAT0 = 1.875, 42.5
PER_CELL = 8


def altitude(x, y):
    return 0.15 + 1.7 * np.exp(-((x - 10.0) / 35.0) ** 2 - ((y - 5.0) / 40.0) ** 2)


def main(path):
    xs = (np.arange(NX * PER_CELL) + 0.5) * DX / PER_CELL
    ys = (np.arange(NY * PER_CELL) + 0.5) * DY / PER_CELL
    X, Y = np.meshgrid(xs, ys)
    layers = {"alt": altitude(X, Y),
              "lon": LON0 + 0.25 * X / DX,
              "lat": LAT0 + 0.25 * Y / DY}
    cells = []
    for j in range(NY):
        for i in range(NX):
            sl = (slice(j * PER_CELL, (j + 1) * PER_CELL), slice(i * PER_CELL, (i + 1) * PER_CELL))
            cells.append({"id": str(1 + i + NX * j),
                          "xmin": i * DX, "xmax": (i + 1) * DX,
                          "ymin": j * DY, "ymax": (j + 1) * DY,
                          "covariates": {k: round(float(v[sl].mean()), 6)
                                         for k, v in layers.items()}})
    doc = {"units": {"x": "km", "y": "km", "alt": "km", "lon": "deg", "lat": "deg"},
           "cells": cells,
           "raster": {"x": xs.round(6).tolist(), "y": ys.round(6).tolist(),
                      "layers": {k: v.round(6).tolist() for k, v in layers.items()}}}
    Path(path).write_text(json.dumps(doc, indent=1))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "configs/geometry_12cells.json")
