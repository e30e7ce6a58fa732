"""Command line: ``tripleplateau {solve,optimize,verify} CONFIG``.

Exit status: 0 success, 1 verification check failed, 2 invalid config or
connection, 3 solver failure, 4 unsupported configuration.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config
from .errors import Case2NotSupported, ConfigError, InvalidConnection, NonConvergence, TriplePlateauError
from .functional import GEvaluator, evaluate
from .geometry import SIDES, connection_length, validate_connection
from .optimize import minimize, steiner_initial
from .report import write_csv, write_quad_mesh, write_report, write_surface_csv
from .verifier import convergence_study, ray_directions

log = logging.getLogger("tripleplateau")

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_SOLVER, EXIT_UNSUPPORTED = 0, 1, 2, 3, 4


def _outdir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override) if override else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check(conn):
    rep = validate_connection(conn)
    if not rep.ok:
        raise InvalidConnection(rep.summary(), rep)


def _export_surfaces(ev, out: Path) -> dict:
    files = {}
    for s in SIDES:
        f = ev.fields[s]
        files[s] = {
            "csv": write_surface_csv(out / f"surface_{s}.csv", f).name,
            "mesh": write_quad_mesh(out / f"surface_{s}.mesh", f).name,
        }
    return files


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    if cfg.connection is None:
        raise InvalidConnection("config has no [connection] table")
    _check(cfg.connection)
    ev = evaluate(cfg.connection, cfg.source, cfg.triangle, cfg.solver, cfg.grid)
    rep = {"command": "solve", **_base(cfg), **ev.to_dict(), "disk_area": cfg.source.disk_area}
    rep["length"] = connection_length(cfg.connection)
    rep["surfaces"] = _export_surfaces(ev, out)
    write_report(out / "report.json", rep)
    print(f"G = {ev.total!r}   |D| + G = {ev.upper_bound()!r}")
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, out: Path) -> int:
    res = minimize(cfg.optimize, cfg.source, cfg.triangle, cfg.solver, cfg.grid)
    rep = {"command": "optimize", **_base(cfg), **res.best.to_dict(), "disk_area": cfg.source.disk_area}
    rep.update(
        candidates=res.evaluations,
        rejected=res.rejected,
        failed=res.failed,
        termination=res.termination,
        seed=cfg.optimize.seed,
        knots=cfg.optimize.knots,
        length=connection_length(res.connection),
    )
    write_csv(out / "trace.csv", ["iteration", "p_x", "p_y", "G", "best_G"],
              ((r.index, r.px, r.py, r.G, r.best_G) for r in res.trace))
    rep["surfaces"] = _export_surfaces(res.best, out)
    write_report(out / "report.json", rep)
    print(f"best p = ({res.p[0]!r}, {res.p[1]!r})   G = {res.G!r}   candidates = {res.evaluations}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    if cfg.jump_angles is None:
        raise ConfigError("required by verify", "source.jump_angles_deg")
    ladder = cfg.verify.ladder
    if len(ladder) < 3:
        raise ConfigError("need >= 3 levels in the eps ladder", "verify.levels")
    # reject unsupported angles before any solve
    ray_directions(cfg.jump_angles)
    conn = cfg.connection or steiner_initial(cfg.triangle)
    _check(conn)
    ev = GEvaluator(cfg.triangle, cfg.source, cfg.solver, cfg.grid).evaluate(conn)
    study = convergence_study(cfg.source, cfg.jump_angles, ev, ladder)
    write_csv(out / "convergence.csv", ["eps", "value", "target", "error", "triangle_bound"],
              ((r.eps, r.value, r.target, r.error, r.triangle_bound) for r in study.rows))
    ok = study.slope >= cfg.verify.min_slope
    rep = {
        "command": "verify",
        **_base(cfg),
        **ev.to_dict(),
        "jump_angles_deg": [math.degrees(a) for a in cfg.jump_angles],
        "levels": study.to_rows(),
        "slope": study.slope,
        "fitted_constant": study.constant,
        "constant_spread": study.constant_spread(),
        "min_slope": cfg.verify.min_slope,
        "slope_ok": ok,
    }
    write_report(out / "report.json", rep)
    print(f"slope = {study.slope:.4f} ({'ok' if ok else 'below'} {cfg.verify.min_slope})")
    return EXIT_OK if ok else EXIT_CHECK


def _base(cfg: RunConfig) -> dict:
    return {
        "version": __version__,
        "triangle": cfg.triangle.vertices.tolist(),
        "r": dict(cfg.source.r),
        "disk_radius": cfg.source.disk_radius,
    }


COMMANDS = {"solve": cmd_solve, "optimize": cmd_optimize, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tripleplateau", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "evaluate the functional for the configured connection",
        "optimize": "search for the connection minimizing the functional",
        "verify": "run the competitor-area convergence study",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="TOML run configuration")
        p.add_argument("-o", "--out", help="output directory (overrides config and environment)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config)
        out = _outdir(cfg, args.out)
        code = COMMANDS[args.command](cfg, out)
    except Case2NotSupported as exc:
        print(f"error: unsupported case: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except NonConvergence as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InvalidConnection as exc:
        print(f"error: invalid connection: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TriplePlateauError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    log.info("finished in %.2f s", time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
