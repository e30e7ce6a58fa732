"""Text outputs: JSON reports, CSV tables and a quad-mesh export.

Floats are written so that reading them back gives the same bits: JSON
uses the shortest round-trip representation and CSV cells use 17
significant digits.

Quad-mesh format::

    QUADMESH 1
    VERTICES <N>
    <x> <y> <z>          # N lines, x = s, y = t, z = f, s varying slowest
    QUADS <M>
    <a> <b> <c> <d>      # M lines, zero-based vertex indices, counter-clockwise
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .plateau import SurfaceField


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_report(path: str | os.PathLike, report: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path


def read_report(path: str | os.PathLike) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(path: str | os.PathLike, header: list[str], rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path: str | os.PathLike) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def write_surface_csv(path: str | os.PathLike, field: SurfaceField) -> Path:
    S, T = np.meshgrid(field.s, field.t, indexing="ij")
    rows = zip(S.ravel(), T.ravel(), field.values.ravel())
    return write_csv(path, ["s", "t", "f"], rows)


def read_surface_csv(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Node abscissae, ordinates and the ``(n_s + 1, n_t + 1)`` value grid."""
    _, data = read_csv(path)
    s = np.unique(data[:, 0])
    t = np.unique(data[:, 1])
    return s, t, data[:, 2].reshape(s.size, t.size)


def write_quad_mesh(path: str | os.PathLike, field: SurfaceField) -> Path:
    n0, n1 = field.values.shape
    S, T = np.meshgrid(field.s, field.t, indexing="ij")
    idx = np.arange(n0 * n1).reshape(n0, n1)
    quads = np.stack([idx[:-1, :-1], idx[1:, :-1], idx[1:, 1:], idx[:-1, 1:]], axis=-1).reshape(-1, 4)
    lines = ["QUADMESH 1", f"VERTICES {n0 * n1}"]
    lines += [f"{fmt(x)} {fmt(y)} {fmt(z)}" for x, y, z in zip(S.ravel(), T.ravel(), field.values.ravel())]
    lines.append(f"QUADS {quads.shape[0]}")
    lines += [" ".join(map(str, q)) for q in quads]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_quad_mesh(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if lines[0].split() != ["QUADMESH", "1"]:
        raise ValueError("not a quad mesh file")
    nv = int(lines[1].split()[1])
    verts = np.array([[float(v) for v in ln.split()] for ln in lines[2 : 2 + nv]])
    nq = int(lines[2 + nv].split()[1])
    quads = np.array([[int(v) for v in ln.split()] for ln in lines[3 + nv : 3 + nv + nq]], dtype=int)
    return verts, quads.reshape(-1, 4)
