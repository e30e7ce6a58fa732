"""Minimization of the connection functional over triple points and knots."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt

from .errors import GeometryError, NonConvergence
from .functional import GEvaluation, GEvaluator, GridSpec, SourceJunction
from .geometry import Connection, TargetTriangle, connection_length, validate_connection
from .plateau import SolverConfig

logger = logging.getLogger(__name__)

# candidates whose G differ by less than this are ranked by length, then p
TIE_TOL = 1e-9


@dataclass(frozen=True)
class OptimizationSpec:
    knots: int = 0  # interior knots per branch
    lattice: int = 9  # barycentric screening lattice resolution
    multistart: int = 2
    max_evals: int = 120  # per local search
    xatol: float = 1e-4  # relative to diam(T)
    fatol: float = 1e-10
    seed: int = 0
    margin: float = 1e-6  # relative distance kept from the triangle boundary
    screen_factor: int = 4  # screening grid is the solver grid divided by this

    def __post_init__(self):
        if self.knots < 0 or self.lattice < 3 or self.multistart < 1 or self.max_evals < 1:
            raise ValueError("invalid optimization settings")


@dataclass
class TraceRow:
    index: int
    G: float
    best_G: float
    px: float
    py: float


@dataclass
class OptimizationResult:
    best: GEvaluation
    trace: list = field(default_factory=list)
    screening: list = field(default_factory=list)  # (px, py, G) on the coarse grid
    evaluations: int = 0
    rejected: int = 0
    failed: int = 0
    termination: str = ""

    @property
    def G(self) -> float:
        return self.best.total

    @property
    def p(self) -> np.ndarray:
        return self.best.connection.p

    @property
    def connection(self) -> Connection:
        return self.best.connection


def better(a: GEvaluation, b: GEvaluation | None) -> bool:
    """Whether ``a`` should replace ``b`` as the incumbent."""
    if b is None:
        return True
    if a.total < b.total - TIE_TOL:
        return True
    if a.total > b.total + TIE_TOL:
        return False
    la, lb = connection_length(a.connection), connection_length(b.connection)
    if la != lb:
        return la < lb
    return tuple(a.connection.p) < tuple(b.connection.p)


def steiner_initial(triangle: TargetTriangle) -> Connection:
    """Straight connection through :func:`fermat_point`."""
    return Connection.straight(triangle, fermat_point(triangle))


def fermat_point(triangle: TargetTriangle) -> np.ndarray:
    """Fermat point of the triangle, or a nearby interior point.

    Uses the classical construction: erect an equilateral triangle outward
    on each side and join its apex to the opposite vertex; the joins meet at
    the Fermat point.  When an angle reaches 120 degrees the Fermat point is
    that vertex, which is not an admissible triple point, so a point one
    hundredth of the diameter along the interior bisector is returned; it
    lies in ``T_int`` for obtuse triangles.
    """
    V = triangle.vertices
    angles = triangle.angles
    k = int(np.argmax(angles))
    if angles[k] >= 2 * math.pi / 3 - 1e-12:
        u = V[(k + 1) % 3] - V[k]
        w = V[(k + 2) % 3] - V[k]
        b = u / np.linalg.norm(u) + w / np.linalg.norm(w)
        return V[k] + 0.01 * triangle.diam * b / np.linalg.norm(b)
    lines = []
    for side, opp in (("12", 2), ("23", 0)):
        xi, eta = triangle.side_frame(side)
        i = {"12": 0, "23": 1}[side]
        mid = V[i] + 0.5 * triangle.side_length(side) * xi
        apex = mid - 0.5 * math.sqrt(3) * triangle.side_length(side) * eta
        lines.append((V[opp], apex - V[opp]))
    (a, da), (b, db) = lines
    s = np.linalg.solve(np.column_stack([da, -db]), b - a)
    return a + s[0] * da


def barycentric_lattice(triangle: TargetTriangle, resolution: int) -> np.ndarray:
    """Interior lattice points ``(i, j, k) / resolution`` in snake order."""
    pts = []
    for i in range(1, resolution - 1):
        row = [(i, j, resolution - i - j) for j in range(1, resolution - i)]
        if i % 2:
            row.reverse()
        pts.extend(row)
    lam = np.array(pts, dtype=float) / resolution
    return lam @ triangle.vertices


def admissible(triangle: TargetTriangle, p, margin: float = 1e-6) -> bool:
    lam = triangle.barycentric(p)
    if np.any(lam < margin):
        return False
    return triangle.in_t_int(p)


def build_connection(triangle: TargetTriangle, p, offsets: np.ndarray) -> Connection:
    """Connection with ``k`` knots per branch displaced normally from the chord.

    ``offsets`` has shape ``(3, k)`` and is measured in units of the chord
    length.  If the result is not a valid connection the offsets are halved
    until it is; the straight connection is always valid for admissible
    ``p``.
    """
    p = np.asarray(p, dtype=float)
    offsets = np.asarray(offsets, dtype=float).reshape(3, -1)
    k = offsets.shape[1]
    if k == 0:
        return Connection.straight(triangle, p)
    frac = np.arange(1, k + 1) / (k + 1)
    scale = 1.0
    for _ in range(40):
        interior = []
        for i in range(3):
            a = triangle.vertices[i]
            chord = p - a
            n = np.array([-chord[1], chord[0]])
            interior.append(a + frac[:, None] * chord + (scale * offsets[i])[:, None] * n)
        conn = Connection.from_interior_knots(triangle, p, interior)
        if validate_connection(conn).ok:
            return conn
        scale *= 0.5
    return Connection.straight(triangle, p)


class _Search:
    def __init__(self, evaluator: GEvaluator, spec: OptimizationSpec):
        self.ev = evaluator
        self.spec = spec
        self.best: GEvaluation | None = None
        self.trace: list[TraceRow] = []
        self.rejected = 0
        self.failed = 0
        self.tri = evaluator.triangle

    def __call__(self, x: np.ndarray) -> float:
        p = x[:2]
        if not admissible(self.tri, p, self.spec.margin):
            self.rejected += 1
            return math.inf
        conn = build_connection(self.tri, p, x[2:].reshape(3, -1))
        try:
            res = self.ev.evaluate(conn)
        except NonConvergence as exc:
            logger.warning("candidate p=%s skipped: %s", p, exc)
            self.failed += 1
            return math.inf
        if better(res, self.best):
            self.best = res
        self.trace.append(TraceRow(len(self.trace), res.total, self.best.total, p[0], p[1]))
        return res.total


def minimize(
    spec: OptimizationSpec,
    source: SourceJunction,
    triangle: TargetTriangle,
    config: SolverConfig | None = None,
    grid: GridSpec | None = None,
) -> OptimizationResult:
    """Screen a coarse lattice of straight connections, then refine locally.

    The lattice is evaluated on a coarsened grid; the Fermat-point start and
    the best lattice points seed Nelder-Mead searches over ``p`` with
    straight branches on the full grid.  With knots requested, a final
    search over ``p`` and the knot offsets starts from the best straight
    connection.
    """
    config = config or SolverConfig()
    grid = grid or GridSpec()
    diam = triangle.diam
    f = max(spec.screen_factor, 1)
    coarse = GridSpec(max(16, grid.n_s // f), max(16, grid.n_t // f))
    screen_ev = GEvaluator(triangle, source, config, coarse, keep_fields=False)
    screening = []
    for p in barycentric_lattice(triangle, spec.lattice):
        if admissible(triangle, p, spec.margin):
            try:
                g = screen_ev.evaluate(Connection.straight(triangle, p)).total
            except NonConvergence:
                continue
            screening.append((p[0], p[1], g))
    screening.sort(key=lambda r: r[2])

    starts = [fermat_point(triangle)]
    for px, py, _ in screening:
        if len(starts) >= spec.multistart:
            break
        q = np.array([px, py])
        if min(np.linalg.norm(q - s) for s in starts) > 1e-3 * diam:
            starts.append(q)
    starts = [s for s in starts if admissible(triangle, s, spec.margin)] or [triangle.vertices.mean(0)]

    evaluator = GEvaluator(triangle, source, config, grid)
    search = _Search(evaluator, spec)
    rng = np.random.default_rng(spec.seed)
    reasons = []

    def local(p0, knots):
        dim = 2 + 3 * knots
        x0 = np.concatenate([p0, np.zeros(3 * knots)])
        step = np.concatenate([np.full(2, 0.05 * diam), np.full(3 * knots, 0.05)])
        simplex = [x0]
        # seeded rotation of the initial simplex
        Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        for d in range(dim):
            cand = x0 + step * Q[:, d]
            if not admissible(triangle, cand[:2], spec.margin):
                cand = x0 - step * Q[:, d]
            simplex.append(cand)
        out = sopt.minimize(
            search,
            x0,
            method="Nelder-Mead",
            options={
                "initial_simplex": np.array(simplex),
                "xatol": spec.xatol * diam,
                "fatol": spec.fatol,
                "maxfev": spec.max_evals,
            },
        )
        reasons.append("converged" if out.success else "evaluation budget exhausted")
        if search.best is not None:
            logger.info("local search from %s (k=%d): best G %.12g", p0, knots, search.best.total)

    # straight branches first, so that adding knots can only improve
    for p0 in starts:
        local(p0, 0)
    if spec.knots and search.best is not None:
        local(search.best.connection.p.copy(), spec.knots)
    if search.best is None:
        raise NonConvergence("every candidate failed to solve")
    return OptimizationResult(
        best=search.best,
        trace=search.trace,
        screening=screening,
        evaluations=len(search.trace),
        rejected=search.rejected,
        failed=search.failed,
        termination="; ".join(reasons),
    )


def brute_force_p_grid(
    resolution: int,
    source: SourceJunction,
    triangle: TargetTriangle,
    config: SolverConfig | None = None,
    grid: GridSpec | None = None,
    margin: float = 1e-6,
    table: list | None = None,
) -> tuple[np.ndarray, float]:
    """Best straight connection over the interior barycentric lattice.

    Returns ``(best_p, best_G)``; pass a list as ``table`` to collect every
    ``(px, py, G)`` evaluated.  Points that fail to solve are skipped.
    """
    if resolution < 5:
        raise ValueError("resolution must be at least 5")
    evaluator = GEvaluator(triangle, source, config, grid, keep_fields=False)
    best = None
    for p in barycentric_lattice(triangle, resolution):
        if not admissible(triangle, p, margin):
            continue
        try:
            res = evaluator.evaluate(Connection.straight(triangle, p))
        except NonConvergence:
            continue
        if table is not None:
            table.append((p[0], p[1], res.total))
        if better(res, best):
            best = res
    if best is None:
        raise GeometryError("lattice has no admissible point")
    return best.connection.p.copy(), best.total
