"""Nonparametric minimal surfaces on a rectangle with one free side.

The unknown is a height field ``f`` on a tensor lattice of
``[0, width] x [0, height]``, uniform in ``t`` and uniform in ``s`` unless
explicit abscissae are given.  The
bottom edge carries the boundary datum, the two vertical edges carry its end
values, and the top edge is free.  The area is discretized cell by cell: every
corner of a cell gets the one-sided gradient of the right triangle sitting at
that corner, and the four integrand values are averaged.  This is the exact
mean of the two diagonal splittings of the cell into linear triangles, so the
energy is convex, invariant under both axis reflections, and its
Euler-Lagrange system is a weighted Laplacian with positive weights (hence
obeys a discrete maximum principle).

Minimizing over the free top row gives the natural boundary condition, which
is the same discrete system one gets by mirroring the rectangle across its top
edge and solving the symmetric Dirichlet problem; :func:`solve_doubled` does
the latter explicitly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GridMismatch, NonConvergence

logger = logging.getLogger(__name__)

# one-sided edge differences used by each corner of a cell; local node order
# is (f00, f10, f01, f11) with the first index along s
_DS = {0: np.array([-1.0, 1.0, 0.0, 0.0]), 1: np.array([0.0, 0.0, -1.0, 1.0])}
_DT = {0: np.array([-1.0, 0.0, 1.0, 0.0]), 1: np.array([0.0, -1.0, 0.0, 1.0])}
# corner -> (bottom/top s-edge, left/right t-edge)
_CORNERS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 50
    continuation_steps: int = 3
    min_damping: float = 2.0**-30
    # intermediate homotopy stages are only solved this accurately
    stage_tol: float = 1e-6

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.continuation_steps < 1:
            raise ValueError("continuation_steps must be at least 1")


@dataclass(frozen=True)
class PlateauProblem:
    """Minimal-surface problem on ``[0, width] x [0, height]``.

    ``bottom`` holds the boundary datum at the ``n_s + 1`` lattice abscissae;
    the datum is extended constantly in ``t``, so the left and right edges
    carry ``bottom[0]`` and ``bottom[-1]``.  ``nodes`` optionally replaces
    the uniform abscissae by any increasing sequence from ``0`` to ``width``.
    """

    width: float
    height: float
    bottom: np.ndarray
    n_t: int
    nodes: np.ndarray | None = None

    def __post_init__(self):
        b = np.asarray(self.bottom, dtype=float)
        object.__setattr__(self, "bottom", b)
        if b.ndim != 1 or b.size < 2:
            raise ValueError("bottom data must be a 1-D array of node values")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("rectangle sides must be positive")
        if self.n_s < 8 or self.n_t < 8:
            raise ValueError("grid needs at least 8 cells per direction")
        if self.nodes is not None:
            object.__setattr__(self, "nodes", _check_nodes(self.nodes, self.width, b.size))

    @classmethod
    def from_function(
        cls,
        width: float,
        height: float,
        func: Callable[[np.ndarray], np.ndarray],
        n_s: int = 128,
        n_t: int = 128,
        nodes: np.ndarray | None = None,
    ) -> "PlateauProblem":
        s = np.linspace(0.0, width, n_s + 1) if nodes is None else np.asarray(nodes, dtype=float)
        return cls(width, height, np.asarray(func(s), dtype=float), n_t, nodes)

    @property
    def n_s(self) -> int:
        return self.bottom.size - 1

    @property
    def h_s(self) -> float:
        """Mean cell width along ``s``."""
        return self.width / self.n_s

    @property
    def cell_hs(self):
        """Cell widths along ``s``: a scalar, or an ``(n_s, 1)`` column."""
        return _cell_hs(self.nodes, self.width, self.n_s)

    @property
    def h_t(self) -> float:
        return self.height / self.n_t

    @property
    def s(self) -> np.ndarray:
        if self.nodes is not None:
            return self.nodes
        return np.linspace(0.0, self.width, self.n_s + 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.height, self.n_t + 1)

    def scaled(self, factor: float) -> "PlateauProblem":
        return replace(self, bottom=factor * self.bottom)

    def cylinder(self) -> np.ndarray:
        """The ``t``-constant extension of the datum (always admissible)."""
        return np.repeat(self.bottom[:, None], self.n_t + 1, axis=1)

    def cylinder_area(self) -> float:
        """Area of the cylinder competitor: height times the datum's polyline length."""
        ds = np.diff(self.bottom)
        return self.height * float(np.sum(np.hypot(np.diff(self.s), ds)))


def _check_nodes(nodes, width: float, size: int) -> np.ndarray:
    x = np.array(nodes, dtype=float)
    if x.shape != (size,):
        raise GridMismatch("nodes must match the boundary data")
    if x[0] != 0.0 or not math.isclose(x[-1], width, rel_tol=1e-12) or np.any(np.diff(x) <= 0):
        raise ValueError("nodes must increase strictly from 0 to width")
    x[-1] = width
    x.setflags(write=False)
    return x


def _cell_hs(nodes, width: float, n_s: int):
    if nodes is None:
        return width / n_s
    return np.diff(nodes)[:, None]


@dataclass(frozen=True)
class SurfaceField:
    values: np.ndarray  # shape (n_s + 1, n_t + 1), first index along s
    width: float
    height: float
    residual: float
    area: float
    iterations: int = 0
    neumann_top: bool = True
    meta: dict = field(default_factory=dict, compare=False)
    nodes: np.ndarray | None = None

    @property
    def n_s(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_t(self) -> int:
        return self.values.shape[1] - 1

    @property
    def h_s(self) -> float:
        return self.width / self.n_s

    @property
    def cell_hs(self):
        return _cell_hs(self.nodes, self.width, self.n_s)

    @property
    def h_t(self) -> float:
        return self.height / self.n_t

    @property
    def s(self) -> np.ndarray:
        if self.nodes is not None:
            return self.nodes
        return np.linspace(0.0, self.width, self.n_s + 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.height, self.n_t + 1)

    def same_grid(self, other: "SurfaceField") -> bool:
        return (
            self.values.shape == other.values.shape
            and math.isclose(self.width, other.width, rel_tol=1e-14)
            and math.isclose(self.height, other.height, rel_tol=1e-14)
            and np.allclose(self.s, other.s, rtol=0, atol=1e-14 * self.width)
        )


# ---------------------------------------------------------------------------
# discrete energy


def _edge_gradients(f: np.ndarray, hs: float, ht: float):
    ds = np.diff(f, axis=0) / hs  # (n_s, n_t + 1): s-differences on horizontal edges
    dt = np.diff(f, axis=1) / ht  # (n_s + 1, n_t): t-differences on vertical edges
    # per cell: bottom/top s-edge, left/right t-edge
    return (ds[:, :-1], ds[:, 1:]), (dt[:-1, :], dt[1:, :])


def cell_integrand(f: np.ndarray, hs: float, ht: float) -> np.ndarray:
    """Per-cell mean of the four corner values of ``sqrt(1 + |grad f|^2)``."""
    gs, gt = _edge_gradients(f, hs, ht)
    acc = np.zeros((f.shape[0] - 1, f.shape[1] - 1))
    for es, et in _CORNERS:
        acc += np.sqrt(1.0 + gs[es] ** 2 + gt[et] ** 2)
    return 0.25 * acc


def discrete_area(f: np.ndarray, width: float, height: float, nodes=None) -> float:
    f = np.asarray(f, dtype=float)
    hs = _cell_hs(nodes, width, f.shape[0] - 1)
    ht = height / (f.shape[1] - 1)
    return float(np.sum(hs * ht * cell_integrand(f, hs, ht)))


def area(field: SurfaceField) -> float:
    """Discrete graph area of a solved field (never below ``width * height``)."""
    return discrete_area(field.values, field.width, field.height, field.nodes)


def energy_gradient(f: np.ndarray, hs: float, ht: float) -> np.ndarray:
    """Gradient of the discrete area with respect to every node value."""
    gs, gt = _edge_gradients(f, hs, ht)
    w = 0.25 * hs * ht
    Gs = [np.zeros_like(gs[0]), np.zeros_like(gs[1])]
    Gt = [np.zeros_like(gt[0]), np.zeros_like(gt[1])]
    for es, et in _CORNERS:
        inv = w / np.sqrt(1.0 + gs[es] ** 2 + gt[et] ** 2)
        Gs[es] += inv * gs[es]
        Gt[et] += inv * gt[et]
    g = np.zeros_like(f)
    g[:-1, :-1] += -Gs[0] / hs - Gt[0] / ht
    g[1:, :-1] += Gs[0] / hs - Gt[1] / ht
    g[:-1, 1:] += -Gs[1] / hs + Gt[0] / ht
    g[1:, 1:] += Gs[1] / hs + Gt[1] / ht
    return g


def hessian_vector(f: np.ndarray, v: np.ndarray, hs: float, ht: float) -> np.ndarray:
    """Matrix-free product of the energy Hessian at ``f`` with ``v``."""
    gs, gt = _edge_gradients(f, hs, ht)
    vs, vt = _edge_gradients(v, hs, ht)
    w = 0.25 * hs * ht
    Gs = [np.zeros_like(gs[0]), np.zeros_like(gs[1])]
    Gt = [np.zeros_like(gt[0]), np.zeros_like(gt[1])]
    for es, et in _CORNERS:
        a, b = gs[es], gt[et]
        q = 1.0 + a * a + b * b
        inv = w / np.sqrt(q)
        proj = (a * vs[es] + b * vt[et]) / q
        Gs[es] += inv * (vs[es] - a * proj)
        Gt[et] += inv * (vt[et] - b * proj)
    out = np.zeros_like(f)
    out[:-1, :-1] += -Gs[0] / hs - Gt[0] / ht
    out[1:, :-1] += Gs[0] / hs - Gt[1] / ht
    out[:-1, 1:] += -Gs[1] / hs + Gt[0] / ht
    out[1:, 1:] += Gs[1] / hs + Gt[1] / ht
    return out


def _local_hessian(f: np.ndarray, hs: float, ht: float) -> np.ndarray:
    gs, gt = _edge_gradients(f, hs, ht)
    w = 0.25 * hs * ht
    K = np.zeros((4, 4) + gs[0].shape)
    for es, et in _CORNERS:
        a, b = gs[es], gt[et]
        q = 1.0 + a * a + b * b
        inv = w / np.sqrt(q)
        hss = inv * (1.0 - a * a / q)
        htt = inv * (1.0 - b * b / q)
        hst = -inv * a * b / q
        bs, bt = _DS[es], _DT[et]
        K += (
            np.multiply.outer(np.outer(bs, bs), hss / (hs * hs))
            + np.multiply.outer(np.outer(bs, bt) + np.outer(bt, bs), hst / (hs * ht))
            + np.multiply.outer(np.outer(bt, bt), htt / (ht * ht))
        )
    return K.reshape(16, -1)


@lru_cache(maxsize=16)
def _pattern(n0: int, n1: int, neumann_top: bool):
    """Sparsity pattern of the free-free Hessian block, in CSC order."""
    mask = _free_mask((n0, n1), neumann_top)
    free_id = np.full(n0 * n1, -1)
    free = np.flatnonzero(mask.ravel())
    free_id[free] = np.arange(free.size)
    idx = np.arange(n0 * n1).reshape(n0, n1)
    nodes = np.stack([idx[:-1, :-1], idx[1:, :-1], idx[:-1, 1:], idx[1:, 1:]]).reshape(4, -1)
    rows = free_id[np.repeat(nodes[:, None, :], 4, axis=1).reshape(16, -1)]
    cols = free_id[np.repeat(nodes[None, :, :], 4, axis=0).reshape(16, -1)]
    keep = (rows >= 0) & (cols >= 0)
    key = cols[keep].astype(np.int64) * free.size + rows[keep]
    uniq, inverse = np.unique(key, return_inverse=True)
    indices = (uniq % free.size).astype(np.int32)
    counts = np.bincount((uniq // free.size).astype(np.int64), minlength=free.size)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
    return mask, free, keep, inverse, indices, indptr


def _assemble(f: np.ndarray, hs: float, ht: float, neumann_top: bool) -> sp.csc_matrix:
    mask, free, keep, inverse, indices, indptr = _pattern(f.shape[0], f.shape[1], neumann_top)
    data = np.bincount(inverse, weights=_local_hessian(f, hs, ht)[keep], minlength=indices.size)
    return sp.csc_matrix((data, indices, indptr), shape=(free.size, free.size))


# ---------------------------------------------------------------------------
# Newton solver


def _free_mask(shape, neumann_top: bool) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    mask[1:-1, 1:] = True
    if not neumann_top:
        mask[:, -1] = False
    return mask


class Workspace:
    """Per-grid scratch state reused across solves: a lagged LU factorization.

    Newton steps are computed by conjugate gradients preconditioned with the
    most recent factorization of a Hessian on the same lattice; the matrix is
    refactored only when that preconditioner stops being effective.  A
    workspace must not be shared between threads.
    """

    def __init__(self, max_cg: int = 25):
        self.max_cg = max_cg
        self.key = None
        self.lu = None
        self.factorizations = 0

    def _key(self, f, hs, ht, neumann_top):
        # a factorization from a nearby lattice is still a usable
        # preconditioner; CG checks convergence against the true operator
        return (f.shape, neumann_top)

    def step(self, f, g_free, hs, ht, neumann_top, rtol):
        key = self._key(f, hs, ht, neumann_top)
        mask = _free_mask(f.shape, neumann_top)
        if self.key == key and self.lu is not None:
            n = g_free.size

            def matvec(x):
                v = np.zeros_like(f)
                v[mask] = x
                return hessian_vector(f, v, hs, ht)[mask]

            A = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
            M = spla.LinearOperator((n, n), matvec=self.lu.solve, dtype=float)
            x, info = spla.cg(A, -g_free, rtol=rtol, atol=0.0, maxiter=self.max_cg, M=M)
            if info == 0:
                return x
        H = _assemble(f, hs, ht, neumann_top)
        self.lu = spla.splu(H, permc_spec="MMD_AT_PLUS_A")
        self.key = key
        self.factorizations += 1
        return self.lu.solve(-g_free)


def _boundary_fill(problem: PlateauProblem, f: np.ndarray, top=None) -> None:
    f[:, 0] = problem.bottom
    f[0, :] = problem.bottom[0]
    f[-1, :] = problem.bottom[-1]
    if top is not None:
        f[:, -1] = top


def _newton(
    problem: PlateauProblem,
    f: np.ndarray,
    tol: float,
    config: SolverConfig,
    neumann_top: bool,
    ws: Workspace,
) -> tuple[np.ndarray, float, int]:
    hs, ht = problem.cell_hs, problem.h_t
    mask = _free_mask(f.shape, neumann_top)
    scale = 1.0 / (problem.h_s * ht)

    def energy(x):
        return float(np.sum(hs * ht * cell_integrand(x, hs, ht)))

    # the scaled residual cannot be resolved below the rounding error of the
    # difference quotients, which dominates on strongly anisotropic cells
    hmin = float(np.min(hs))
    floor = 8.0 * np.finfo(float).eps * (1.0 / hmin**2 + 1.0 / ht**2)

    def target(x):
        return max(tol, floor * (1.0 + float(np.max(np.abs(x)))))

    g = energy_gradient(f, hs, ht)
    res = float(np.max(np.abs(g[mask]), initial=0.0)) * scale
    E = energy(f)
    it = 0
    while res > target(f):
        if it >= config.max_iter:
            raise NonConvergence(
                f"Newton stalled at residual {res:.3e} after {it} iterations", res
            )
        it += 1
        g_free = g[mask]
        # forcing term: superlinear far out, no tighter than needed to reach tol
        eta = min(1e-2, max(1e-2 * math.sqrt(res), 0.3 * tol / res))
        step = ws.step(f, g_free, hs, ht, neumann_top, rtol=eta)
        slope = float(g_free @ step)
        alpha = 1.0
        while True:
            trial = f.copy()
            trial[mask] += alpha * step
            E_new = energy(trial)
            if E_new <= E + 1e-4 * alpha * slope:
                break
            if abs(E_new - E) <= 1e-13 * abs(E):
                g_new = energy_gradient(trial, hs, ht)
                if np.max(np.abs(g_new[mask])) * scale < res:
                    break
            alpha *= 0.5
            if alpha < config.min_damping:
                raise NonConvergence(f"line search failed at residual {res:.3e}", res)
        f = trial
        E = E_new
        g = energy_gradient(f, hs, ht)
        res = float(np.max(np.abs(g[mask]), initial=0.0)) * scale
    return f, res, it


def _solve(
    problem: PlateauProblem,
    config: SolverConfig,
    initial: np.ndarray | None,
    neumann_top: bool,
    top: np.ndarray | None = None,
    ws: Workspace | None = None,
) -> SurfaceField:
    ws = ws or Workspace()
    shape = (problem.n_s + 1, problem.n_t + 1)
    if initial is not None:
        f = np.array(initial, dtype=float)
        if f.shape != shape:
            raise GridMismatch("initial guess has the wrong shape")
        # carry the change of boundary data into the interior
        f += (problem.bottom - f[:, 0])[:, None]
        _boundary_fill(problem, f, top)
        try:
            f, res, it = _newton(problem, f, config.tol, config, neumann_top, ws)
            return _field(problem, f, res, it, neumann_top)
        except NonConvergence:
            logger.debug("warm start failed, falling back to continuation")
    if not np.any(problem.bottom) and (top is None or not np.any(top)):
        return _field(problem, np.zeros(shape), 0.0, 0, neumann_top)
    k = config.continuation_steps
    total = 0
    f = None
    for stage in range(1, k + 1):
        lam = stage / k
        sub = problem.scaled(lam)
        if f is None:
            f = sub.cylinder()
        else:
            # rescaled previous stage as the next starting guess
            f = f * (stage / (stage - 1))
        _boundary_fill(sub, f, None if top is None else lam * top)
        tol = config.tol if stage == k else max(config.tol, config.stage_tol)
        f, res, it = _newton(sub, f, tol, config, neumann_top, ws)
        total += it
    return _field(problem, f, res, total, neumann_top)


def _field(problem, f, res, iterations, neumann_top) -> SurfaceField:
    return SurfaceField(
        values=f,
        width=problem.width,
        height=problem.height,
        residual=res,
        area=discrete_area(f, problem.width, problem.height, problem.nodes),
        iterations=iterations,
        neumann_top=neumann_top,
        nodes=problem.nodes,
    )


def solve(
    problem: PlateauProblem,
    config: SolverConfig | None = None,
    initial: np.ndarray | None = None,
    workspace: Workspace | None = None,
) -> SurfaceField:
    """Minimize the discrete area with the top edge free.

    ``initial`` is an optional warm start on the same lattice; its boundary
    values are overwritten with the problem data.  Passing the same
    ``workspace`` to a series of solves on one lattice lets them share
    factorizations.
    """
    config = config or SolverConfig()
    return _solve(problem, config, initial, neumann_top=True, ws=workspace)


def doubled_problem(problem: PlateauProblem) -> PlateauProblem:
    return PlateauProblem(
        problem.width, 2.0 * problem.height, problem.bottom, 2 * problem.n_t, problem.nodes
    )


def solve_doubled(
    problem: PlateauProblem, config: SolverConfig | None = None
) -> SurfaceField:
    """Dirichlet solve on the rectangle mirrored across its top edge.

    The datum is imposed on the bottom and on the mirrored top edge; the
    returned field is the full doubled one (see :func:`restrict_doubled`).
    """
    config = config or SolverConfig()
    big = doubled_problem(problem)
    return _solve(big, config, None, neumann_top=False, top=problem.bottom)


def restrict_doubled(field: SurfaceField) -> SurfaceField:
    n_t = field.n_t // 2
    f = field.values[:, : n_t + 1].copy()
    h = field.height / 2.0
    return SurfaceField(
        f, field.width, h, field.residual, discrete_area(f, field.width, h, field.nodes),
        field.iterations, neumann_top=True, nodes=field.nodes,
    )


def max_principle_holds(field: SurfaceField, atol: float = 1e-12) -> bool:
    """Node-wise check ``min(boundary data) <= f <= max(boundary data)``."""
    f = field.values
    if field.neumann_top:
        bdry = np.concatenate([f[:, 0], f[0, :], f[-1, :]])
    else:
        bdry = np.concatenate([f[:, 0], f[:, -1], f[0, :], f[-1, :]])
    lo, hi = bdry.min(), bdry.max()
    return bool(np.all(f >= lo - atol) and np.all(f <= hi + atol))


# ---------------------------------------------------------------------------
# refinement study


@dataclass(frozen=True)
class RefinementStudy:
    n: list[int]
    areas: list[float]
    extrapolated: float
    order: float
    ratios: list[float]


def refine_and_extrapolate(
    problem: PlateauProblem,
    config: SolverConfig | None = None,
    levels: int = 3,
    func: Callable[[np.ndarray], np.ndarray] | None = None,
) -> RefinementStudy:
    """Solve on the problem's grid and ``levels - 1`` dyadic refinements.

    Finer data come from ``func`` when given, otherwise from piecewise-linear
    interpolation of the problem's own node values.  The order is estimated
    from the last three levels and the area is Richardson-extrapolated.
    When successive differences vanish (data resolved exactly) the order is
    reported as ``inf`` and the finest area is returned unchanged.
    """
    if levels < 3:
        raise ValueError("need at least 3 refinement levels")
    config = config or SolverConfig()
    if func is None:
        s0, b0 = problem.s.copy(), problem.bottom.copy()

        def func(s):
            return np.interp(s, s0, b0)

    ns, areas = [], []
    for k in range(levels):
        n_s, n_t = problem.n_s * 2**k, problem.n_t * 2**k
        fine = PlateauProblem.from_function(problem.width, problem.height, func, n_s, n_t)
        field = solve(fine, config)
        n = n_s
        ns.append(n)
        areas.append(field.area)
    d = np.diff(areas)
    scale = max(1.0, abs(areas[-1]))
    ratios = [float(d[i] / d[i + 1]) if d[i + 1] != 0 else math.inf for i in range(len(d) - 1)]
    if abs(d[-1]) <= 1e-14 * scale and abs(d[-2]) <= 1e-14 * scale:
        return RefinementStudy(ns, areas, areas[-1], math.inf, ratios)
    q = d[-2] / d[-1]
    if q <= 1.0:
        # not in the asymptotic range; no extrapolation
        return RefinementStudy(ns, areas, areas[-1], 0.0, ratios)
    order = math.log2(q)
    extrapolated = areas[-1] + d[-1] / (q - 1.0)
    return RefinementStudy(ns, areas, float(extrapolated), float(order), ratios)
