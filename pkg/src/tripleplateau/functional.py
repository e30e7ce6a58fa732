"""The connection functional: sum of three half-plateau areas."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import plateau
from .errors import GeometryError, GridMismatch, InvalidConnection, NonConvergence
from .geometry import (
    SIDES,
    Connection,
    SideFunction,
    TargetTriangle,
    build_side_function,
    validate_connection,
)
from .plateau import PlateauProblem, SolverConfig, SurfaceField


@dataclass(frozen=True)
class SourceJunction:
    """Jump-set data of the source map: ray lengths ``r_ij`` and disk radius."""

    r: dict
    disk_radius: float

    def __post_init__(self):
        r = {s: float(self.r[s]) for s in SIDES}
        object.__setattr__(self, "r", r)
        R = float(self.disk_radius)
        if not (math.isfinite(R) and R > 0):
            raise GeometryError("disk radius must be positive")
        for s, v in r.items():
            if not (math.isfinite(v) and v > 0):
                raise GeometryError(f"r_{s} must be positive")
            if v > 2 * R * (1 + 1e-12):
                raise GeometryError(f"r_{s} exceeds the disk diameter")

    @classmethod
    def symmetric(cls, r: float = 1.0, disk_radius: float | None = None) -> "SourceJunction":
        return cls({s: r for s in SIDES}, r if disk_radius is None else disk_radius)

    @property
    def disk_area(self) -> float:
        return math.pi * self.disk_radius**2


@dataclass(frozen=True)
class GridSpec:
    n_s: int = 128
    n_t: int = 128


@dataclass
class GEvaluation:
    connection: Connection
    source: SourceJunction
    grid: GridSpec
    areas: dict
    residuals: dict
    iterations: dict
    side_functions: dict
    fields: dict = field(default_factory=dict, repr=False)

    @property
    def total(self) -> float:
        return float(sum(self.areas[s] for s in SIDES))

    def upper_bound(self) -> float:
        return self.source.disk_area + self.total

    def to_dict(self) -> dict:
        return {
            "p": [float(x) for x in self.connection.p],
            "branches": [b.tolist() for b in self.connection.branches],
            "areas": dict(self.areas),
            "residuals": dict(self.residuals),
            "iterations": dict(self.iterations),
            "G": self.total,
            "upper_bound": self.upper_bound(),
            "grid": {"n_s": self.grid.n_s, "n_t": self.grid.n_t},
        }


def split_cells(triangle: TargetTriangle, reference, n_s: int) -> dict:
    """Cells to put left of the apex on each side, from a reference triple point."""
    out = {}
    for side in SIDES:
        w, _ = triangle.project_to_side(reference, side)
        frac = w / triangle.side_length(side)
        out[side] = min(max(int(round(n_s * frac)), 1), n_s - 1)
    return out


def side_nodes(fn: SideFunction, n_s: int, n_left: int | None) -> np.ndarray | None:
    """Abscissae with the apex ``w`` as node ``n_left``.

    Sampling a kinked profile at nodes that miss the kink clips the apex and
    biases the area downward by an amount that oscillates with ``w`` on the
    scale of one cell; pinning ``w`` to a node with a fixed number of cells
    on each part removes that bias and keeps the area continuous in ``w``.
    """
    ell, w = fn.length, fn.w
    if n_left is None or not (1e-9 * ell < w < ell * (1 - 1e-9)):
        return None
    return np.concatenate(
        [np.linspace(0.0, w, n_left + 1), np.linspace(w, ell, n_s - n_left + 1)[1:]]
    )


def side_problem(fn: SideFunction, r: float, grid: GridSpec, n_left: int | None = None) -> PlateauProblem:
    nodes = side_nodes(fn, grid.n_s, n_left)
    s = np.linspace(0.0, fn.length, grid.n_s + 1) if nodes is None else nodes
    return PlateauProblem(fn.length, r, fn(s), grid.n_t, nodes)


class GEvaluator:
    """Evaluates the functional for many connections on one triangle.

    Keeps one solver workspace per side, optionally warm-starts each solve
    from the previous field on that side, and memoizes results by knot
    coordinates.  Safe to share between threads.

    With ``aligned`` set, each side lattice puts the apex abscissa on a node,
    with the split between the two parts fixed by ``reference`` (the
    centroid by default) so that the functional varies continuously with
    the triple point.
    """

    def __init__(
        self,
        triangle: TargetTriangle,
        source: SourceJunction,
        config: SolverConfig | None = None,
        grid: GridSpec | None = None,
        warm_start: bool = True,
        keep_fields: bool = True,
        cache_size: int = 4096,
        aligned: bool = True,
        reference=None,
    ):
        self.triangle = triangle
        self.source = source
        self.config = config or SolverConfig()
        self.grid = grid or GridSpec()
        self.warm_start = warm_start
        self.keep_fields = keep_fields
        self.cache_size = cache_size
        self._cache: dict[bytes, GEvaluation] = {}
        self._lock = threading.Lock()
        self._ws = {s: plateau.Workspace() for s in SIDES}
        self._last: dict[str, np.ndarray] = {}
        self.solves = 0
        ref = triangle.vertices.mean(axis=0) if reference is None else np.asarray(reference, float)
        self.split = split_cells(triangle, ref, self.grid.n_s) if aligned else {s: None for s in SIDES}

    def evaluate(self, conn: Connection, validate: bool = True) -> GEvaluation:
        if not np.array_equal(conn.triangle.vertices, self.triangle.vertices):
            raise GeometryError("connection belongs to a different triangle")
        key = conn.knot_key()
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
            if validate:
                rep = validate_connection(conn)
                if not rep.ok:
                    raise InvalidConnection(rep.summary(), rep)
            areas, res, its, fns, flds = {}, {}, {}, {}, {}
            for side in SIDES:
                fn = build_side_function(conn, side)
                prob = side_problem(fn, self.source.r[side], self.grid, self.split[side])
                init = self._last.get(side) if self.warm_start else None
                try:
                    sf = plateau.solve(prob, self.config, initial=init, workspace=self._ws[side])
                except NonConvergence as exc:
                    raise NonConvergence(f"side {side}: {exc}", exc.residual, side) from exc
                self.solves += 1
                if self.warm_start:
                    self._last[side] = sf.values
                areas[side], res[side], its[side], fns[side] = sf.area, sf.residual, sf.iterations, fn
                if self.keep_fields:
                    flds[side] = sf
            ev = GEvaluation(conn, self.source, self.grid, areas, res, its, fns, flds)
            if len(self._cache) >= self.cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = ev
            return ev


def evaluate(
    conn: Connection,
    source: SourceJunction,
    triangle: TargetTriangle | None = None,
    config: SolverConfig | None = None,
    grid: GridSpec | None = None,
) -> GEvaluation:
    """One cold evaluation of the functional (no warm starts, no shared cache)."""
    if triangle is not None and not np.array_equal(triangle.vertices, conn.triangle.vertices):
        raise GeometryError("connection belongs to a different triangle")
    ev = GEvaluator(conn.triangle, source, config, grid, warm_start=False)
    return ev.evaluate(conn)


def upper_bound(ev: GEvaluation) -> float:
    return ev.upper_bound()


class Gap(NamedTuple):
    lhs: float
    rhs: float
    side: str
    per_side: dict


def boundary_l1(a: SideFunction, b: SideFunction) -> float:
    """L1 distance of the Dirichlet traces on the reflected rectangle boundary.

    The reflected rectangle carries the datum on its top and bottom edges
    and zero on the vertical edges, so the distance is twice the L1
    distance along the side.
    """
    return 2.0 * a.l1_distance(b)


def continuity_gap(a: GEvaluation, b: GEvaluation) -> Gap:
    """Compare area change with boundary-datum change, side by side.

    Per side, ``lhs`` is the change of the reflected (doubled) area and
    ``rhs`` the L1 distance of the two boundary traces; the returned side is
    the one with the largest ``lhs - rhs``.
    """
    if a.grid != b.grid:
        raise GridMismatch(f"grids differ: {a.grid} vs {b.grid}")
    if not np.array_equal(a.connection.triangle.vertices, b.connection.triangle.vertices):
        raise GridMismatch("evaluations belong to different triangles")
    if a.source.r != b.source.r:
        raise GridMismatch("evaluations use different rectangle heights")
    per = {}
    for s in SIDES:
        lhs = abs(2.0 * a.areas[s] - 2.0 * b.areas[s])
        rhs = boundary_l1(a.side_functions[s], b.side_functions[s])
        per[s] = (lhs, rhs)
    worst = max(SIDES, key=lambda s: per[s][0] - per[s][1])
    return Gap(per[worst][0], per[worst][1], worst, per)


def field_for(ev: GEvaluation, side: str) -> SurfaceField:
    try:
        return ev.fields[side]
    except KeyError:
        raise GridMismatch(f"evaluation did not keep the field on side {side}") from None
