"""Target triangle, graph-type connections and their per-side height functions.

Sides are labelled ``"12"``, ``"23"``, ``"31"``.  Side ``ij`` runs from
``alpha_i`` to ``alpha_j``; its abscissa is measured from ``alpha_i`` and its
height along the inward unit normal, so every side function is nonnegative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import GeometryError, KnotBudgetTooSmall, NotAGraph

SIDES = ("12", "23", "31")
SIDE_VERTICES = {"12": (0, 1), "23": (1, 2), "31": (2, 0)}
# branch index -> (side where it is the left part, side where it is the right part)
BRANCH_SIDES = {0: ("12", "31"), 1: ("23", "12"), 2: ("31", "23")}

# slope slack for graphicality; see validate_connection
SLOPE_TOL = 1e-9


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


@dataclass(frozen=True)
class TargetTriangle:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.shape != (3, 2) or not np.all(np.isfinite(v)):
            raise GeometryError("triangle needs three finite 2-D vertices")
        object.__setattr__(self, "vertices", v)
        v.setflags(write=False)
        scale = max(np.ptp(v[:, 0]), np.ptp(v[:, 1]), 1e-300)
        if abs(self.twice_signed_area) <= 1e-12 * scale * scale:
            raise GeometryError("degenerate triangle")

    @property
    def twice_signed_area(self) -> float:
        a, b, c = self.vertices
        return _cross(b - a, c - a)

    @property
    def orientation(self) -> int:
        """+1 for counter-clockwise labelling, -1 otherwise."""
        return 1 if self.twice_signed_area > 0 else -1

    @property
    def area(self) -> float:
        return 0.5 * abs(self.twice_signed_area)

    def vertex(self, i: int) -> np.ndarray:
        """Vertex ``alpha_i`` with 1-based ``i``."""
        return self.vertices[i - 1]

    def side_length(self, side: str) -> float:
        i, j = SIDE_VERTICES[side]
        return float(np.linalg.norm(self.vertices[j] - self.vertices[i]))

    @property
    def diam(self) -> float:
        return max(self.side_length(s) for s in SIDES)

    def side_frame(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        """Unit tangent from ``alpha_i`` to ``alpha_j`` and inward unit normal."""
        i, j = SIDE_VERTICES[side]
        xi = (self.vertices[j] - self.vertices[i]) / self.side_length(side)
        eta = self.orientation * np.array([-xi[1], xi[0]])
        return xi, eta

    def angle(self, i: int) -> float:
        """Interior angle at ``alpha_i`` (1-based) in radians."""
        k = i - 1
        a = self.vertices[k]
        u = self.vertices[(k + 1) % 3] - a
        w = self.vertices[(k + 2) % 3] - a
        return math.atan2(abs(_cross(u, w)), float(u @ w))

    @property
    def angles(self) -> tuple[float, float, float]:
        return tuple(self.angle(i) for i in (1, 2, 3))

    @property
    def obtuse_vertex(self) -> int | None:
        for i in (1, 2, 3):
            if self.angle(i) > math.pi / 2:
                return i
        return None

    def project_to_side(self, point, side: str) -> tuple[float, float]:
        """Abscissa from ``alpha_i`` and height along the inward normal."""
        i, _ = SIDE_VERTICES[side]
        xi, eta = self.side_frame(side)
        d = np.asarray(point, dtype=float) - self.vertices[i]
        return float(d @ xi), float(d @ eta)

    def from_side(self, s: float, h: float, side: str) -> np.ndarray:
        i, _ = SIDE_VERTICES[side]
        xi, eta = self.side_frame(side)
        return self.vertices[i] + s * xi + h * eta

    def barycentric(self, point) -> np.ndarray:
        a, b, c = self.vertices
        T = np.column_stack([b - a, c - a])
        l2, l3 = np.linalg.solve(T, np.asarray(point, dtype=float) - a)
        return np.array([1.0 - l2 - l3, l2, l3])

    def contains(self, point, tol: float = 1e-12) -> bool:
        return bool(np.all(self.barycentric(point) >= -tol))

    def in_t_int(self, point, tol: float = 1e-12) -> bool:
        """Whether ``point`` lies between the perpendiculars at an obtuse vertex.

        Always true when the triangle has no obtuse angle.
        """
        k = self.obtuse_vertex
        if k is None:
            return True
        scale = tol * self.diam
        for side in BRANCH_SIDES[k - 1]:
            s, _ = self.project_to_side(point, side)
            lo, hi = -scale, self.side_length(side) + scale
            if not lo <= s <= hi:
                return False
        return True

    def permuted(self, perm: Sequence[int]) -> "TargetTriangle":
        """New triangle whose vertex ``i`` is old vertex ``perm[i-1]`` (1-based)."""
        return TargetTriangle(self.vertices[[p - 1 for p in perm]])

    def slope_bounds(self, side: str) -> tuple[float, float]:
        """Graphicality slope bounds in the frame of ``side``.

        A piece of the left branch (from ``alpha_i``) must rise with slope
        above the first value to stay a graph over the other side at
        ``alpha_i``; a piece of the right branch must have slope below the
        second value.
        """
        i, j = SIDE_VERTICES[side]
        return -1.0 / math.tan(self.angle(i + 1)), 1.0 / math.tan(self.angle(j + 1))


@dataclass(frozen=True)
class SideFunction:
    """Piecewise-linear height profile over one side of the triangle."""

    side: str
    knots: np.ndarray
    values: np.ndarray
    length: float
    w: float

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.shape != v.shape or k.ndim != 1 or k.size < 2:
            raise ValueError("knots and values must be matching 1-D arrays")
        if np.any(np.diff(k) < 0):
            raise NotAGraph("side function knots must be nondecreasing", self.side)
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    def __call__(self, s):
        return np.interp(s, self.knots, self.values)

    @property
    def apex_height(self) -> float:
        return float(self(self.w))

    @property
    def graph_length(self) -> float:
        return float(np.sum(np.hypot(np.diff(self.knots), np.diff(self.values))))

    @property
    def lipschitz(self) -> float:
        ds = np.diff(self.knots)
        dv = np.diff(self.values)
        ok = ds > 0
        return float(np.max(np.abs(dv[ok] / ds[ok]), initial=0.0))

    def slopes(self) -> np.ndarray:
        ds = np.diff(self.knots)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.diff(self.values) / ds

    def l1_distance(self, other: "SideFunction") -> float:
        """Exact ``int |self - other| ds`` over ``[0, length]``."""
        return float(l1_between(self.knots, self.values, other.knots, other.values))

    def to_points(self, triangle: TargetTriangle) -> np.ndarray:
        return np.array([triangle.from_side(s, h, self.side) for s, h in zip(self.knots, self.values)])


def l1_between(k1, v1, k2, v2) -> float:
    """L1 distance of two piecewise-linear functions (exact, including sign changes)."""
    s = np.union1d(k1, k2)
    d = np.interp(s, k1, v1) - np.interp(s, k2, v2)
    a, b = d[:-1], d[1:]
    h = np.diff(s)
    same = a * b >= 0
    total = np.sum(np.where(same, 0.5 * h * np.abs(a + b), 0.0))
    # piece crossing zero: two triangles
    cross = ~same
    denom = np.abs(a[cross]) + np.abs(b[cross])
    total += np.sum(0.5 * h[cross] * (a[cross] ** 2 + b[cross] ** 2) / denom)
    return float(total)


@dataclass(frozen=True)
class Connection:
    """Three polyline branches from the vertices to a common point ``p``."""

    triangle: TargetTriangle
    p: np.ndarray
    branches: tuple

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(2)
        object.__setattr__(self, "p", p)
        bs = []
        for i, b in enumerate(self.branches):
            b = np.array(b, dtype=float).reshape(-1, 2)
            if b.shape[0] < 2:
                raise GeometryError(f"branch {i + 1} needs at least two knots")
            b.setflags(write=False)
            bs.append(b)
        if len(bs) != 3:
            raise GeometryError("a connection has exactly three branches")
        object.__setattr__(self, "branches", tuple(bs))

    @classmethod
    def straight(cls, triangle: TargetTriangle, p) -> "Connection":
        p = np.asarray(p, dtype=float)
        return cls(triangle, p, tuple(np.array([triangle.vertices[i], p]) for i in range(3)))

    @classmethod
    def from_interior_knots(
        cls, triangle: TargetTriangle, p, interior: Sequence[Iterable]
    ) -> "Connection":
        p = np.asarray(p, dtype=float)
        branches = []
        for i in range(3):
            mid = np.asarray(list(interior[i]), dtype=float).reshape(-1, 2)
            branches.append(np.vstack([triangle.vertices[i], mid, p]))
        return cls(triangle, p, tuple(branches))

    def w(self, side: str) -> float:
        return self.triangle.project_to_side(self.p, side)[0]

    def knot_key(self) -> bytes:
        return b"|".join(b.tobytes() for b in self.branches) + self.triangle.vertices.tobytes()

    def permuted(self, perm: Sequence[int]) -> "Connection":
        tri = self.triangle.permuted(perm)
        return Connection(tri, self.p, tuple(self.branches[q - 1] for q in perm))


def project_to_side(point, side: str, triangle: TargetTriangle) -> tuple[float, float]:
    return triangle.project_to_side(point, side)


def build_side_function(conn: Connection, side: str) -> SideFunction:
    """Height profile of ``Gamma_i U Gamma_j`` over side ``ij``.

    Raises :class:`NotAGraph` when the projected knots run backwards by more
    than a roundoff tolerance.
    """
    tri = conn.triangle
    i, j = SIDE_VERTICES[side]
    left = np.array([tri.project_to_side(q, side) for q in conn.branches[i]])
    right = np.array([tri.project_to_side(q, side) for q in conn.branches[j][::-1]])
    pts = np.vstack([left, right[1:]])
    ell = tri.side_length(side)
    tol = 1e-10 * tri.diam
    ds = np.diff(pts[:, 0])
    if np.any(ds < -tol):
        bad = int(np.argmax(ds < -tol))
        raise NotAGraph(
            f"branches over side {side} are not a graph (knot {bad} runs back by {-ds[bad]:.3g})",
            side,
        )
    s = np.maximum.accumulate(pts[:, 0])
    s[0], s[-1] = 0.0, ell
    s = np.clip(s, 0.0, ell)
    h = pts[:, 1]
    if np.any(h < -tol):
        raise GeometryError(f"connection leaves the triangle across side {side}")
    h = np.maximum(h, 0.0)
    h[0] = h[-1] = 0.0
    w = float(np.clip(left[-1, 0], 0.0, ell))
    return SideFunction(side, s, h, ell, w)


# ---------------------------------------------------------------------------
# validation


@dataclass
class Violation:
    kind: str
    where: str
    message: str


@dataclass
class ValidationReport:
    sides: dict = field(default_factory=dict)  # side -> single-valued flag
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def violated_sides(self) -> list[str]:
        return sorted({v.where for v in self.violations if v.where in SIDES})

    def summary(self) -> str:
        if self.ok:
            return "valid connection"
        return "; ".join(f"{v.kind} at {v.where}: {v.message}" for v in self.violations)


def _segments_intersect(p1, p2, q1, q2, tol) -> bool:
    d1, d2 = p2 - p1, q2 - q1
    den = _cross(d1, d2)
    r = q1 - p1
    if abs(den) <= tol * max(np.linalg.norm(d1) * np.linalg.norm(d2), 1e-300):
        # parallel: overlap only if collinear
        if abs(_cross(r, d1)) > tol * max(np.linalg.norm(d1), 1e-300):
            return False
        L = float(d1 @ d1)
        if L == 0:
            return False
        a = float(r @ d1) / L
        b = float((q2 - p1) @ d1) / L
        lo, hi = min(a, b), max(a, b)
        return hi >= -tol and lo <= 1 + tol
    u = _cross(r, d2) / den
    v = _cross(r, d1) / den
    return -tol <= u <= 1 + tol and -tol <= v <= 1 + tol


def validate_connection(conn: Connection, triangle: TargetTriangle | None = None) -> ValidationReport:
    """Check every defining property of a Lipschitz graph-type connection.

    Per side ``ij``, the two incident branches must advance monotonically
    along the side.  Per branch, each linear piece must also keep the branch
    a graph over its other side; in the frame of side ``ij`` this is the
    slope bound from :meth:`TargetTriangle.slope_bounds`, accepted up to
    ``SLOPE_TOL``.  A slope violation is reported on the side over which the
    branch stops being a graph.
    """
    tri = triangle or conn.triangle
    rep = ValidationReport()
    diam = tri.diam
    tol = 1e-10 * diam

    for i in range(3):
        b = conn.branches[i]
        if np.linalg.norm(b[0] - tri.vertices[i]) > tol:
            rep.violations.append(Violation("endpoint", f"branch{i + 1}", "does not start at its vertex"))
        if np.linalg.norm(b[-1] - conn.p) > tol:
            rep.violations.append(Violation("endpoint", f"branch{i + 1}", "does not end at p"))
        if np.any(np.linalg.norm(np.diff(b, axis=0), axis=1) <= tol):
            rep.violations.append(Violation("shared-point", f"branch{i + 1}", "zero-length piece"))
        for q in b:
            if not tri.contains(q, tol=1e-10):
                rep.violations.append(Violation("outside", f"branch{i + 1}", "knot outside the triangle"))
                break
    for i in range(3):
        if np.linalg.norm(conn.p - tri.vertices[i]) <= tol:
            rep.violations.append(
                Violation("shared-point", f"alpha{i + 1}", "triple point coincides with a vertex")
            )

    for side in SIDES:
        i, j = SIDE_VERTICES[side]
        lo, hi = tri.slope_bounds(side)
        ok = True
        for idx, sign in ((i, 1.0), (j, -1.0)):
            pts = np.array([tri.project_to_side(q, side) for q in conn.branches[idx]])
            ds = sign * np.diff(pts[:, 0])
            dh = np.diff(pts[:, 1])
            if np.any(ds <= tol):
                ok = False
                rep.violations.append(
                    Violation("double-valued", side, f"branch {idx + 1} does not advance along side {side}")
                )
                continue
            slope = sign * dh / ds  # slope in the side frame, oriented along +s
            other = BRANCH_SIDES[idx][1] if sign > 0 else BRANCH_SIDES[idx][0]
            if sign > 0 and np.any(slope < lo - SLOPE_TOL):
                rep.violations.append(
                    Violation("slope", other, f"branch {idx + 1} slope below {lo:.6g} over side {side}")
                )
            if sign < 0 and np.any(slope > hi + SLOPE_TOL):
                rep.violations.append(
                    Violation("slope", other, f"branch {idx + 1} slope above {hi:.6g} over side {side}")
                )
        rep.sides[side] = ok

    if tri.obtuse_vertex is not None and not tri.in_t_int(conn.p, tol=1e-10):
        rep.violations.append(Violation("t-int", f"alpha{tri.obtuse_vertex}", "p outside T_int"))

    # the branches may meet only at p
    for a in range(3):
        for b in range(a + 1, 3):
            A, B = conn.branches[a], conn.branches[b]
            hit = False
            for u in range(len(A) - 1):
                for v in range(len(B) - 1):
                    if u == len(A) - 2 and v == len(B) - 2:
                        # both last pieces end at p; test them shortened
                        if _segments_intersect(A[u], A[u] + 0.999 * (A[u + 1] - A[u]),
                                               B[v], B[v] + 0.999 * (B[v + 1] - B[v]), 1e-12):
                            hit = True
                        continue
                    if _segments_intersect(A[u], A[u + 1], B[v], B[v + 1], 1e-12):
                        hit = True
            if hit:
                rep.violations.append(
                    Violation("shared-point", f"branches{a + 1}{b + 1}", "branches meet away from p")
                )
    return rep


# ---------------------------------------------------------------------------
# approximation and lengths


def piecewise_linear_approximate(side_fn: SideFunction, n: int) -> SideFunction:
    """Interpolate a densely sampled profile at ``n + 1`` of its own knots.

    The nodes always include ``0``, ``w`` and ``length`` and are otherwise
    spread uniformly on ``[0, w]`` and ``[w, length]`` in proportion to their
    lengths, then snapped to the nearest sample.  Because the result is a
    polyline through a subset of the input vertices, it is never longer than
    the input, and each chord slope is an average of input slopes (so the
    graphicality bounds carry over).
    """
    if n < 2:
        raise KnotBudgetTooSmall(f"knot budget {n} < 2")
    k, v = side_fn.knots, side_fn.values
    if k.size <= n + 1:
        return side_fn
    ell, w = side_fn.length, side_fn.w
    if 0.0 < w < ell:
        n_left = min(max(int(round(n * w / ell)), 1), n - 1)
        targets = np.concatenate(
            [np.linspace(0.0, w, n_left + 1), np.linspace(w, ell, n - n_left + 1)[1:]]
        )
    else:
        targets = np.linspace(0.0, ell, n + 1)
    pos = np.searchsorted(k, targets).clip(1, k.size - 1)
    nearest = np.where(np.abs(k[pos - 1] - targets) <= np.abs(k[pos] - targets), pos - 1, pos)
    anchors = [0, k.size - 1]
    if 0.0 < w < ell:
        anchors.append(int(np.argmin(np.abs(k - w))))
    idx = np.unique(np.concatenate([nearest, anchors]))
    return SideFunction(side_fn.side, k[idx], v[idx], ell, w)


def connection_length(conn: Connection) -> float:
    return float(sum(np.sum(np.linalg.norm(np.diff(b, axis=0), axis=1)) for b in conn.branches))


def branch_lengths(conn: Connection) -> tuple[float, float, float]:
    return tuple(float(np.sum(np.linalg.norm(np.diff(b, axis=0), axis=1))) for b in conn.branches)


def _chord_slope_bound(tri: TargetTriangle, i: int, p) -> float:
    """Smaller of the two cone-edge slopes seen from the chord ``alpha_i -> p``."""
    a = tri.vertices[i]
    chord = np.asarray(p, dtype=float) - a
    L = np.linalg.norm(chord)
    n = chord / L
    nperp = np.array([-n[1], n[0]])
    best = math.inf
    for side in BRANCH_SIDES[i]:
        _, eta = tri.side_frame(side)
        c = eta @ n
        if c > 1e-15:
            best = min(best, abs(eta @ nperp) / c)
    return best


def length_bound(triangle: TargetTriangle, p=None) -> float:
    """Upper bound on the total length of any valid connection.

    With ``p`` given, each branch is bounded by ``|alpha_i - p| (1 + 2 c_i)``
    with ``c_i`` the smaller cone-edge slope measured from the chord
    ``alpha_i -> p``.  Without ``p`` the uniform bound uses
    ``|alpha_i - p| <= diam`` and ``c_i <= tan((pi - angle_i) / 2)``.
    """
    total = 0.0
    for i in range(3):
        if p is None:
            c = math.tan(0.5 * (math.pi - triangle.angle(i + 1)))
            total += triangle.diam * (1.0 + 2.0 * c)
        else:
            L = float(np.linalg.norm(np.asarray(p) - triangle.vertices[i]))
            if L == 0.0:
                continue
            total += L * (1.0 + 2.0 * _chord_slope_bound(triangle, i, p))
    return total


def pair_length_bound(triangle: TargetTriangle, p, side: str) -> float:
    i, j = SIDE_VERTICES[side]
    out = 0.0
    for k in (i, j):
        L = float(np.linalg.norm(np.asarray(p) - triangle.vertices[k]))
        if L > 0:
            out += L * (1.0 + 2.0 * _chord_slope_bound(triangle, k, p))
    return out


def mollify_pinned(side_fn: SideFunction, sigma: float, samples: int = 2049) -> SideFunction:
    """Smooth a profile keeping its values at ``0``, ``w`` and ``length``.

    The profile is mollified with a bump of radius ``sigma / 2``, the
    abscissa is stretched so that the mollified support fits in
    ``[0, length]``, and the result is rescaled to restore the apex value.
    A zero apex value is handled by smoothing ``[0, w]`` and ``[w, length]``
    separately.
    """
    ell, w, top = side_fn.length, side_fn.w, side_fn.apex_height
    if sigma <= 0:
        return side_fn

    def smooth(func, a, b, pin=None):
        L = b - a
        s = np.linspace(a, b, samples)
        r = 0.5 * sigma
        z = np.linspace(-r, r, 65)[1:-1]
        ker = np.exp(-1.0 / (1.0 - (z / r) ** 2))
        ker /= ker.sum()
        x = (L + 2 * sigma) / L * (s - a) - sigma + a
        vals = np.array([np.sum(ker * func(xx - z)) for xx in x])
        if pin is not None:
            xp = (L + 2 * sigma) / L * (pin - a) - sigma + a
            at = np.sum(ker * func(xp - z))
            if at > 0:
                vals *= top / at
        return s, vals

    def ext(x):
        return np.where((x < 0) | (x > ell), 0.0, side_fn(x))

    if top > 0 and 0 < w < ell:
        s, v = smooth(ext, 0.0, ell, pin=w)
        # the rescaling makes the value at w exactly the apex height
        pos = int(np.searchsorted(s, w))
        if pos < s.size and s[pos] == w:
            v[pos] = top
        else:
            s, v = np.insert(s, pos, w), np.insert(v, pos, top)
    else:
        parts = [(0.0, w), (w, ell)] if 0 < w < ell else [(0.0, ell)]
        ss, vv = [], []
        for a, b in parts:

            def piece(x, a=a, b=b):
                return np.where((x < a) | (x > b), 0.0, side_fn(x))

            s, v = smooth(piece, a, b)
            ss.append(s)
            vv.append(v)
        s = np.concatenate([ss[0]] + [q[1:] for q in ss[1:]])
        v = np.concatenate([vv[0]] + [q[1:] for q in vv[1:]])
    v[0] = v[-1] = 0.0
    return SideFunction(side_fn.side, s, v, ell, w)
