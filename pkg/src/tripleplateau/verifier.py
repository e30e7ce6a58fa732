"""Area of the explicit recovery-sequence competitor for a triple-junction source.

The source map takes three constant values on three sectors ``E_1, E_2, E_3``
of a disk, separated by three rays from the origin (the jump segments
``r_12``, ``r_23``, ``r_31``).  For a thickness ``eps`` the competitor is
built from

* a small triangle ``T_eps`` around the origin whose sides sit at distance
  ``eps`` from it, one orthogonal to each ray,
* three strips ``S_ij`` standing on those sides and running along the rays
  up to the circle, on which the half-plateau solution of side ``ij`` is
  laid out,
* the remaining parts ``E_i^eps`` of the sectors, where the map is constant.

Only the configuration with every sector angle below ``pi`` is built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Case2NotSupported, EpsilonTooLarge, GeometryError, GridMismatch
from .functional import GEvaluation, SourceJunction, field_for
from .geometry import SIDES, SIDE_VERTICES
from .plateau import SurfaceField

GAUSS_POINTS = 8


def _unit(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


def ray_directions(jump_angles) -> dict:
    """Unit directions of the three rays from the sector angles of E_1, E_2, E_3.

    Ray 12 points along +y; sector ``E_1`` follows it counter-clockwise up
    to ray 31, then ``E_3`` up to ray 23, then ``E_2`` back to ray 12.
    """
    a1, a2, a3 = (float(a) for a in jump_angles)
    for k, a in enumerate((a1, a2, a3), start=1):
        if a >= math.pi:
            raise Case2NotSupported(f"sector E_{k} has angle {math.degrees(a):.6g} deg >= 180")
        if a <= 0:
            raise GeometryError(f"sector E_{k} has a nonpositive angle")
    if abs(a1 + a2 + a3 - 2 * math.pi) > 1e-9:
        raise GeometryError("sector angles must sum to 360 degrees")
    base = math.pi / 2
    return {"12": _unit(base), "31": _unit(base + a1), "23": _unit(base + a1 + a3)}


def disk_center(source: SourceJunction, dirs: dict) -> np.ndarray:
    """Center of the disk through the three ray endpoints, checked against the radius."""
    P = [source.r[s] * dirs[s] for s in SIDES]
    A = 2.0 * np.array([P[1] - P[0], P[2] - P[0]])
    b = np.array([P[1] @ P[1] - P[0] @ P[0], P[2] @ P[2] - P[0] @ P[0]])
    try:
        c = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise GeometryError("ray endpoints are collinear") from None
    R = float(np.linalg.norm(P[0] - c))
    if not math.isclose(R, source.disk_radius, rel_tol=1e-9):
        raise GeometryError(
            f"ray endpoints lie on a circle of radius {R:.12g}, not {source.disk_radius:.12g}"
        )
    if np.linalg.norm(c) >= R:
        raise GeometryError("junction point lies outside the disk")
    return c


def _F(u, R):
    """Antiderivative of ``sqrt(R^2 - u^2)``."""
    u = np.clip(u, -R, R)
    return 0.5 * (u * np.sqrt(R * R - u * u) + R * R * np.arcsin(u / R))


@dataclass
class StripFrame:
    side: str
    d: np.ndarray  # ray direction
    e: np.ndarray  # across the strip, from zeta^i to zeta^j
    xa: float
    xb: float
    cx: float
    cy: float
    R: float
    delta: float
    r: float

    def y_top(self, x):
        return self.cy + np.sqrt(np.maximum(self.R**2 - (np.asarray(x) - self.cx) ** 2, 0.0))

    def area_between(self, x0: float, x1: float) -> float:
        """Exact area of the strip part with ``x0 <= x <= x1``."""
        lo, hi = x0 - self.cx, x1 - self.cx
        return float((self.cy - self.delta) * (x1 - x0) + _F(hi, self.R) - _F(lo, self.R))

    @property
    def width(self) -> float:
        return self.xb - self.xa

    @property
    def c_eps(self) -> float:
        if self.xa <= self.cx <= self.xb:
            top = self.cy + self.R
        else:
            top = float(max(self.y_top(self.xa), self.y_top(self.xb)))
        return top - self.r

    @property
    def kappa(self) -> float:
        return self.r / (self.r + self.c_eps - self.delta)


@dataclass
class EpsilonGeometry:
    eps: float
    delta: float
    source: SourceJunction
    jump_angles: tuple
    directions: dict
    center: np.ndarray
    zeta: np.ndarray  # rows zeta^1, zeta^2, zeta^3
    strips: dict
    triangle_area: float
    sector_areas: dict
    region_areas: dict = field(default_factory=dict)
    strip_areas: dict = field(default_factory=dict)  # |S_ij|

    @property
    def eps_side(self) -> dict:
        return {s: self.strips[s].width for s in SIDES}

    @property
    def kappa(self) -> dict:
        return {s: self.strips[s].kappa for s in SIDES}

    @property
    def c_eps(self) -> dict:
        return {s: self.strips[s].c_eps for s in SIDES}

    @property
    def disk_area(self) -> float:
        return self.source.disk_area

    def partition_total(self) -> float:
        return sum(self.region_areas.values()) + sum(self.strip_areas.values()) + self.triangle_area


def _sector_area(c: np.ndarray, R: float, pa: np.ndarray, pb: np.ndarray) -> float:
    """Area swept from the origin along the arc from ``pa`` counter-clockwise to ``pb``."""
    ta = math.atan2(pa[1] - c[1], pa[0] - c[0])
    tb = math.atan2(pb[1] - c[1], pb[0] - c[0])
    while tb <= ta:
        tb += 2 * math.pi
    cx, cy = c
    return 0.5 * (R * R * (tb - ta) + R * cx * (math.sin(tb) - math.sin(ta)) - R * cy * (math.cos(tb) - math.cos(ta)))


def build_geometry(source: SourceJunction, jump_angles, eps: float, delta: float | None = None) -> EpsilonGeometry:
    """Assemble the partition of the disk for thickness ``eps`` (``delta`` defaults to ``eps``)."""
    if not eps > 0:
        raise GeometryError("eps must be positive")
    delta = eps if delta is None else float(delta)
    dirs = ray_directions(jump_angles)
    c = disk_center(source, dirs)
    R = source.disk_radius

    def meet(s1, s2):
        return np.linalg.solve(np.array([dirs[s1], dirs[s2]]), np.array([delta, delta]))

    zeta = np.array([meet("12", "31"), meet("12", "23"), meet("23", "31")])
    if np.any(np.linalg.norm(zeta - c, axis=1) >= R):
        raise EpsilonTooLarge(f"eps={eps:g}: inner triangle leaves the disk")

    strips = {}
    for side in SIDES:
        i, j = SIDE_VERTICES[side]
        d = dirs[side]
        e = np.array([d[1], -d[0]])
        if e @ (zeta[j] - zeta[i]) < 0:
            e = -e
        xa, xb = float(e @ zeta[i]), float(e @ zeta[j])
        fr = StripFrame(side, d, e, xa, xb, float(e @ c), float(d @ c), R, delta, source.r[side])
        if max(abs(xa - fr.cx), abs(xb - fr.cx)) >= R:
            raise EpsilonTooLarge(f"eps={eps:g}: strip {side} is wider than the disk allows")
        if min(fr.y_top(xa), fr.y_top(xb)) - delta <= 0 or not fr.kappa > 0:
            raise EpsilonTooLarge(f"eps={eps:g}: strip {side} is empty")
        strips[side] = fr

    a, b, cc = zeta
    tri_area = 0.5 * abs((b[0] - a[0]) * (cc[1] - a[1]) - (b[1] - a[1]) * (cc[0] - a[0]))
    # E_1 runs from ray 12 to ray 31, E_3 from 31 to 23, E_2 from 23 to 12
    ends = {s: source.r[s] * dirs[s] for s in SIDES}
    sectors = {
        1: _sector_area(c, R, ends["12"], ends["31"]),
        3: _sector_area(c, R, ends["31"], ends["23"]),
        2: _sector_area(c, R, ends["23"], ends["12"]),
    }
    regions = {}
    for k in (1, 2, 3):
        # T_eps meets E_k in a kite of two right triangles with legs delta and the tangent length
        tangent = math.sqrt(max(float(zeta[k - 1] @ zeta[k - 1]) - delta * delta, 0.0))
        cut = delta * tangent
        for side in SIDES:
            i, j = SIDE_VERTICES[side]
            fr = strips[side]
            if i == k - 1:
                cut += fr.area_between(fr.xa, 0.0)
            elif j == k - 1:
                cut += fr.area_between(0.0, fr.xb)
        regions[k] = sectors[k] - cut
        if regions[k] <= 0:
            raise EpsilonTooLarge(f"eps={eps:g}: sector E_{k} is used up")
    return EpsilonGeometry(
        eps=eps,
        delta=delta,
        source=source,
        jump_angles=tuple(float(x) for x in jump_angles),
        directions=dirs,
        center=c,
        zeta=zeta,
        strips=strips,
        triangle_area=tri_area,
        sector_areas=sectors,
        region_areas=regions,
        strip_areas={s: strips[s].area_between(strips[s].xa, strips[s].xb) for s in SIDES},
    )


def strip_area(geom: EpsilonGeometry, side: str, surface: SurfaceField, identity: bool = False) -> float:
    """Area of the competitor on strip ``S_ij`` built from a half-plateau field.

    The rectangle ``[0, l] x [0, r]`` is mapped onto the strip by stretching
    ``s`` by ``eps_ij / l`` and ``t`` by ``1 / kappa``; the part of the
    rectangle above the image of the circle is cut away.  Per cell the
    transformed integrand is averaged over the same four corner gradients
    the solver uses.  With ``identity`` the map is the identity and no part
    is cut, which reproduces the discrete area of the field.
    """
    fr = geom.strips[side]
    if not math.isclose(surface.height, fr.r, rel_tol=1e-12):
        raise GridMismatch(f"field height {surface.height} does not match r_{side}={fr.r}")
    ell = surface.width
    f = surface.values
    hs = surface.cell_hs
    ht = surface.h_t
    ds = np.diff(f, axis=0) / hs
    dt = np.diff(f, axis=1) / ht
    gs = (ds[:, :-1], ds[:, 1:])
    gt = (dt[:-1, :], dt[1:, :])
    if identity:
        kappa, e2 = 1.0, 0.0
        frac = 1.0
    else:
        kappa = fr.kappa
        e2 = (fr.width / ell) ** 2
        s = surface.s
        xg, wg = np.polynomial.legendre.leggauss(GAUSS_POINTS)
        sq = 0.5 * (s[:-1, None] + s[1:, None]) + 0.5 * np.diff(s)[:, None] * xg[None, :]
        t_top = kappa * (fr.y_top(fr.xa + sq * fr.width / ell) - fr.delta)
        t_top = np.clip(t_top, 0.0, fr.r)
        tb = surface.t[:-1]
        cover = np.clip((t_top[:, None, :] - tb[None, :, None]) / ht, 0.0, 1.0)
        frac = np.tensordot(cover, 0.5 * wg, axes=([2], [0]))
    acc = np.zeros((f.shape[0] - 1, f.shape[1] - 1))
    for es, et in ((0, 0), (0, 1), (1, 0), (1, 1)):
        acc += np.sqrt(1.0 + e2 + gs[es] ** 2 + kappa**2 * (1.0 + e2) * gt[et] ** 2)
    cell = 0.25 * acc
    return float(np.sum(hs * ht * (frac * cell))) / kappa


@dataclass
class VerifierResult:
    eps: float
    value: float
    target: float
    triangle_bound: float
    strip: dict
    geometry: EpsilonGeometry = field(repr=False)

    @property
    def error(self) -> float:
        return self.value - self.target

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "value": self.value,
            "target": self.target,
            "error": self.error,
            "triangle_bound": self.triangle_bound,
            "strip_areas": dict(self.strip),
            "kappa": self.geometry.kappa,
            "eps_side": self.geometry.eps_side,
        }


def total_area(geom: EpsilonGeometry, ev: GEvaluation) -> VerifierResult:
    """Competitor area against ``|D| + G``.

    The inner triangle contributes its flat area; the map there has rank at
    most one, so the true contribution exceeds this by at most
    ``triangle_bound``, an ``O(eps)`` estimate from the Lipschitz constant of
    the foliation.
    """
    if ev.source.r != geom.source.r:
        raise GridMismatch("evaluation and geometry use different ray lengths")
    strips = {s: strip_area(geom, s, field_for(ev, s)) for s in SIDES}
    value = sum(geom.region_areas.values()) + sum(strips.values()) + geom.triangle_area
    lip = max(
        math.hypot(1.0, ev.side_functions[s].lipschitz) * ev.side_functions[s].length / geom.eps_side[s]
        for s in SIDES
    )
    bound = math.sqrt(2.0) * geom.triangle_area * lip
    return VerifierResult(geom.eps, value, geom.disk_area + ev.total, bound, strips, geom)


@dataclass
class ConvergenceStudy:
    rows: list
    slope: float
    constants: list

    @property
    def constant(self) -> float:
        return float(np.mean(self.constants[-3:]))

    def constant_spread(self) -> float:
        tail = np.abs(self.constants[-3:])
        return float(tail.max() / tail.min() - 1.0) if tail.min() > 0 else math.inf

    def to_rows(self) -> list[dict]:
        return [r.to_dict() for r in self.rows]


def convergence_study(source: SourceJunction, jump_angles, ev: GEvaluation, eps_values) -> ConvergenceStudy:
    """Errors over an ``eps`` ladder, their log-log slope and ``error / eps``."""
    eps_values = sorted((float(e) for e in eps_values), reverse=True)
    if len(eps_values) < 3:
        raise ValueError("need >= 3 levels in the eps ladder")
    rows = [total_area(build_geometry(source, jump_angles, e), ev) for e in eps_values]
    err = np.array([abs(r.error) for r in rows])
    eps = np.array(eps_values)
    if np.any(err == 0):
        slope = math.inf
    else:
        slope = float(np.polyfit(np.log(eps), np.log(err), 1)[0])
    return ConvergenceStudy(rows, slope, list(err / eps))
