"""Deterministic writers: CSV time series and legacy-ASCII VTK snapshots.

Every file opens with the SHA-256 digest of the run configuration and the
physical unit of each column or field. Numbers are written with a fixed
format so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

FLOAT = "{:.12e}"


def fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT.format(float(x))


class CsvSeries:
    """Streaming CSV writer with a commented header.

    Parameters
    ----------
    path : path-like
    columns : sequence of (name, unit) pairs
    digest : str
        Configuration digest written into the header.
    """

    def __init__(self, path, columns, digest, title=""):
        self.path = Path(path)
        self.columns = list(columns)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if title:
            self._fh.write(f"# {title}\n")
        self._fh.write(f"# config_sha256: {digest}\n")
        self._fh.write("# units: " + ", ".join(f"{n} [{u}]" for n, u in self.columns) + "\n")
        self._writer.writerow([n for n, _ in self.columns])

    def __call__(self, row):
        if len(row) != len(self.columns):
            raise ValueError(f"{self.path.name}: row has {len(row)} values, expected {len(self.columns)}")
        self._writer.writerow([fmt(v) for v in row])

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_vtk(path, grid, v_fluid, pressure, vorticity, digest, step, t):
    """Legacy ASCII STRUCTURED_GRID snapshot.

    Points are cell corners; vorticity is point data, velocity (averaged to
    cell centres) and pressure are cell data.
    """
    nx, ny = grid.nx, grid.ny
    pts = grid.node_positions
    vel = grid.cell_velocity(v_fluid)
    buf = io.StringIO()
    w = buf.write
    w("# vtk DataFile Version 3.0\n")
    w(f"varfsi step={step} t={fmt(t)} config_sha256={digest} "
      "units: velocity [m/s], pressure [Pa], vorticity [1/s], length [m]\n")
    w("ASCII\nDATASET STRUCTURED_GRID\n")
    w(f"DIMENSIONS {nx + 1} {ny + 1} 1\n")
    w(f"POINTS {len(pts)} double\n")
    for x, y in pts:
        w(f"{fmt(x)} {fmt(y)} {fmt(0.0)}\n")
    w(f"CELL_DATA {nx * ny}\n")
    w("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
    for p in pressure:
        w(fmt(p) + "\n")
    w("VECTORS velocity double\n")
    for u, v in vel:
        w(f"{fmt(u)} {fmt(v)} {fmt(0.0)}\n")
    w(f"POINT_DATA {len(pts)}\n")
    w("SCALARS vorticity double 1\nLOOKUP_TABLE default\n")
    for o in vorticity:
        w(fmt(o) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n",
                          encoding="utf-8")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (tuple, set)):
        return list(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")
