"""Run configuration: a versioned TOML file parsed into domain objects.

Schema (version 1); every table except ``[triangle]`` and ``[source]`` is
optional and all defaults are shown::

    schema_version = 1

    [triangle]
    vertices = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.8660254037844386]]

    [source]
    r = [1.0, 1.0, 1.0]              # r_12, r_23, r_31
    disk_radius = 1.0
    jump_angles_deg = [120.0, 120.0, 120.0]   # sectors E_1, E_2, E_3; verify only

    [solver]
    n_s = 128
    n_t = 128
    tol = 1e-10
    max_iter = 50
    continuation_steps = 3

    [connection]                     # required by solve, optional for verify
    p = [0.5, 0.28867513459481287]
    knots = [[], [], []]             # interior knots of branches 1, 2, 3

    [optimize]
    knots = 0
    lattice = 9
    multistart = 2
    max_evals = 120
    xatol = 1e-4
    seed = 0

    [verify]
    eps0 = 0.1
    levels = 4
    min_slope = 0.9

    [output]
    dir = "out"                      # TRIPLEPLATEAU_OUTPUT_DIR overrides this
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import tomli

from .errors import ConfigError, GeometryError
from .functional import GridSpec, SourceJunction
from .geometry import SIDES, Connection, TargetTriangle
from .optimize import OptimizationSpec
from .plateau import SolverConfig

SCHEMA_VERSION = 1
OUTPUT_ENV = "TRIPLEPLATEAU_OUTPUT_DIR"

_TABLES = {
    "triangle": {"vertices"},
    "source": {"r", "disk_radius", "jump_angles_deg"},
    "solver": {"n_s", "n_t", "tol", "max_iter", "continuation_steps"},
    "connection": {"p", "knots"},
    "optimize": {"knots", "lattice", "multistart", "max_evals", "xatol", "seed"},
    "verify": {"eps0", "levels", "min_slope"},
    "output": {"dir"},
}


@dataclass
class VerifySettings:
    eps0: float = 0.1
    levels: int = 4
    min_slope: float = 0.9

    @property
    def ladder(self) -> list[float]:
        return [self.eps0 / 2**k for k in range(self.levels)]


@dataclass
class RunConfig:
    triangle: TargetTriangle
    source: SourceJunction
    solver: SolverConfig = field(default_factory=SolverConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    connection: Connection | None = None
    optimize: OptimizationSpec = field(default_factory=OptimizationSpec)
    jump_angles: tuple | None = None  # radians
    verify: VerifySettings = field(default_factory=VerifySettings)
    output_dir: Path = Path("out")


def _get(table: dict, key: str, where: str, default: Any = ..., kind=None):
    if key not in table:
        if default is ...:
            raise ConfigError("required field is missing", f"{where}.{key}")
        return default
    value = table[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", f"{where}.{key}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError("must be finite", f"{where}.{key}")
    elif kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", f"{where}.{key}")
    return value


def _numbers(value, where: str, shape: tuple) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("expected an array of numbers", where) from None
    if arr.shape != shape:
        raise ConfigError(f"expected shape {shape}, got {arr.shape}", where)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("values must be finite", where)
    return arr


def parse_config(data: dict, env: dict | None = None) -> RunConfig:
    env = os.environ if env is None else env
    version = data.get("schema_version")
    if version is None:
        raise ConfigError("required field is missing", "schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported version {version!r} (expected {SCHEMA_VERSION})", "schema_version")
    for key, table in data.items():
        if key == "schema_version":
            continue
        if key not in _TABLES:
            raise ConfigError("unknown table", key)
        if not isinstance(table, dict):
            raise ConfigError("expected a table", key)
        extra = set(table) - _TABLES[key]
        if extra:
            raise ConfigError("unknown field", f"{key}.{sorted(extra)[0]}")
    for key in ("triangle", "source"):
        if key not in data:
            raise ConfigError("required table is missing", key)

    tri_t = data["triangle"]
    verts = _numbers(_get(tri_t, "vertices", "triangle"), "triangle.vertices", (3, 2))
    try:
        triangle = TargetTriangle(verts)
    except GeometryError as exc:
        raise ConfigError(str(exc), "triangle.vertices") from None

    src_t = data["source"]
    r = _numbers(_get(src_t, "r", "source"), "source.r", (3,))
    R = _get(src_t, "disk_radius", "source", kind=float)
    try:
        source = SourceJunction(dict(zip(SIDES, r)), R)
    except GeometryError as exc:
        raise ConfigError(str(exc), "source") from None
    angles = None
    if "jump_angles_deg" in src_t:
        angles = tuple(math.radians(a) for a in _numbers(src_t["jump_angles_deg"], "source.jump_angles_deg", (3,)))

    sol_t = data.get("solver", {})
    try:
        solver = SolverConfig(
            tol=_get(sol_t, "tol", "solver", 1e-10, float),
            max_iter=_get(sol_t, "max_iter", "solver", 50, int),
            continuation_steps=_get(sol_t, "continuation_steps", "solver", 3, int),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "solver") from None
    grid = GridSpec(_get(sol_t, "n_s", "solver", 128, int), _get(sol_t, "n_t", "solver", 128, int))
    if grid.n_s < 8 or grid.n_t < 8:
        raise ConfigError("grid needs at least 8 cells per direction", "solver")

    connection = None
    if "connection" in data:
        con_t = data["connection"]
        p = _numbers(_get(con_t, "p", "connection"), "connection.p", (2,))
        knots = _get(con_t, "knots", "connection", [[], [], []])
        if not isinstance(knots, list) or len(knots) != 3:
            raise ConfigError("expected three lists of interior knots", "connection.knots")
        interior = []
        for i, k in enumerate(knots):
            where = f"connection.knots[{i}]"
            interior.append(_numbers(k, where, (len(k), 2)) if len(k) else [])
        try:
            connection = Connection.from_interior_knots(triangle, p, interior)
        except GeometryError as exc:
            raise ConfigError(str(exc), "connection") from None

    opt_t = data.get("optimize", {})
    try:
        opt = OptimizationSpec(
            knots=_get(opt_t, "knots", "optimize", 0, int),
            lattice=_get(opt_t, "lattice", "optimize", 9, int),
            multistart=_get(opt_t, "multistart", "optimize", 2, int),
            max_evals=_get(opt_t, "max_evals", "optimize", 120, int),
            xatol=_get(opt_t, "xatol", "optimize", 1e-4, float),
            seed=_get(opt_t, "seed", "optimize", 0, int),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "optimize") from None

    ver_t = data.get("verify", {})
    verify = VerifySettings(
        eps0=_get(ver_t, "eps0", "verify", 0.1, float),
        levels=_get(ver_t, "levels", "verify", 4, int),
        min_slope=_get(ver_t, "min_slope", "verify", 0.9, float),
    )
    if not verify.eps0 > 0:
        raise ConfigError("must be positive", "verify.eps0")

    out = Path(_get(data.get("output", {}), "dir", "output", "out"))
    if env.get(OUTPUT_ENV):
        out = Path(env[OUTPUT_ENV])
    return RunConfig(triangle, source, solver, grid, connection, opt, angles, verify, out)


def load_config(path: str | os.PathLike, env: dict | None = None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(data, env)
