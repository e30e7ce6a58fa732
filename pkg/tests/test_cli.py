import json
import math

import numpy as np
import pytest

from tripleplateau.cli import EXIT_CHECK, EXIT_INVALID, EXIT_OK, EXIT_SOLVER, EXIT_UNSUPPORTED, main
from tripleplateau.config import OUTPUT_ENV, load_config, parse_config
from tripleplateau.errors import ConfigError
from tripleplateau.report import (
    read_csv,
    read_quad_mesh,
    read_report,
    read_surface_csv,
    write_csv,
    write_quad_mesh,
    write_report,
    write_surface_csv,
)
from tripleplateau.plateau import PlateauProblem, solve

SYMMETRIC = """
schema_version = 1

[triangle]
vertices = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.8660254037844386]]

[source]
r = [1.0, 1.0, 1.0]
disk_radius = 1.0
jump_angles_deg = [120.0, 120.0, 120.0]

[solver]
n_s = 16
n_t = 16

[connection]
p = [0.5, 0.28867513459481287]

[optimize]
max_evals = 25
multistart = 1
lattice = 5

[verify]
eps0 = 0.1
levels = 4
"""


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def run(tmp_path, command, text, *extra):
    cfg = write(tmp_path, text)
    out = tmp_path / "out"
    return main([command, str(cfg), "-o", str(out), *extra]), out


class TestConfig:
    def test_defaults(self):
        cfg = parse_config(
            {"schema_version": 1, "triangle": {"vertices": [[0, 0], [1, 0], [0, 1]]},
             "source": {"r": [1, 1, 1], "disk_radius": 1.0}},
            env={},
        )
        assert cfg.grid.n_s == 128 and cfg.optimize.knots == 0
        assert cfg.verify.ladder == [0.1, 0.05, 0.025, 0.0125]
        assert cfg.connection is None and cfg.jump_angles is None

    def test_missing_disk_radius_names_field(self, tmp_path):
        text = SYMMETRIC.replace("disk_radius = 1.0\n", "")
        with pytest.raises(ConfigError) as err:
            load_config(write(tmp_path, text))
        assert err.value.field == "source.disk_radius"
        assert "source.disk_radius" in str(err.value)

    def test_unknown_field(self, tmp_path):
        with pytest.raises(ConfigError, match="solver.n_x"):
            load_config(write(tmp_path, SYMMETRIC.replace("n_t = 16", "n_x = 16")))

    def test_unknown_table(self, tmp_path):
        with pytest.raises(ConfigError, match="plot"):
            load_config(write(tmp_path, SYMMETRIC + "\n[plot]\nformat = 'png'\n"))

    def test_schema_version(self, tmp_path):
        with pytest.raises(ConfigError, match="schema_version"):
            load_config(write(tmp_path, SYMMETRIC.replace("schema_version = 1", "schema_version = 2")))

    def test_bad_toml(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, "schema_version = = 1"))

    def test_type_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="solver.n_s"):
            load_config(write(tmp_path, SYMMETRIC.replace("n_s = 16", "n_s = 16.5")))
        with pytest.raises(ConfigError, match="triangle.vertices"):
            load_config(write(tmp_path, SYMMETRIC.replace("[0.5, 0.8660254037844386]", "[0.5]")))

    def test_env_overrides_output(self, tmp_path):
        cfg = load_config(write(tmp_path, SYMMETRIC + '\n[output]\ndir = "a"\n'), env={OUTPUT_ENV: "b"})
        assert str(cfg.output_dir) == "b"

    def test_knots_parsed(self, tmp_path):
        text = SYMMETRIC.replace("p = [0.5, 0.28867513459481287]",
                                 "p = [0.5, 0.28867513459481287]\nknots = [[[0.25, 0.14]], [], []]")
        cfg = load_config(write(tmp_path, text))
        assert cfg.connection.branches[0].shape == (3, 2)


class TestReports:
    def test_report_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        data = {"G": float(rng.random()), "values": rng.standard_normal(20).tolist(), "tiny": 5e-324}
        back = read_report(write_report(tmp_path / "r.json", data))
        assert back == data

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        rows = rng.standard_normal((30, 3)) * 10.0 ** rng.integers(-12, 12, (30, 3))
        header, back = read_csv(write_csv(tmp_path / "t.csv", ["a", "b", "c"], rows.tolist()))
        assert header == ["a", "b", "c"]
        assert np.array_equal(back, rows)

    def test_surface_round_trip(self, tmp_path):
        field = solve(PlateauProblem.from_function(1.0, 0.7, lambda s: 0.3 * np.minimum(s, 1 - s), 16, 12))
        s, t, f = read_surface_csv(write_surface_csv(tmp_path / "s.csv", field))
        assert np.array_equal(s, field.s) and np.array_equal(t, field.t)
        assert np.array_equal(f, field.values)
        verts, quads = read_quad_mesh(write_quad_mesh(tmp_path / "s.mesh", field))
        assert verts.shape == (17 * 13, 3) and quads.shape == (16 * 12, 4)
        assert np.array_equal(verts[:, 2], field.values.ravel())


class TestCommands:
    def test_solve(self, tmp_path, capsys):
        code, out = run(tmp_path, "solve", SYMMETRIC)
        assert code == EXIT_OK
        rep = read_report(out / "report.json")
        a = list(rep["areas"].values())
        assert max(a) - min(a) <= 1e-9
        assert rep["upper_bound"] == pytest.approx(math.pi + rep["G"], rel=1e-15)
        for s in ("12", "23", "31"):
            assert (out / f"surface_{s}.csv").exists() and (out / f"surface_{s}.mesh").exists()
        assert "G =" in capsys.readouterr().out

    def test_solve_is_reproducible(self, tmp_path):
        run(tmp_path, "solve", SYMMETRIC)
        first = (tmp_path / "out" / "report.json").read_text()
        run(tmp_path, "solve", SYMMETRIC)
        assert (tmp_path / "out" / "report.json").read_text() == first

    def test_double_valued_branch(self, tmp_path, capsys):
        # knot of branch 1 behind the foot of p on side 31
        q = [0.39330127018922193, 0.5812177826491071]
        text = SYMMETRIC.replace("p = [0.5, 0.28867513459481287]",
                                 f"p = [0.5, 0.28867513459481287]\nknots = [[{q}], [], []]")
        code, _ = run(tmp_path, "solve", text)
        assert code == EXIT_INVALID
        err = capsys.readouterr().err
        assert "invalid connection" in err and "31" in err

    def test_missing_disk_radius(self, tmp_path, capsys):
        code, _ = run(tmp_path, "solve", SYMMETRIC.replace("disk_radius = 1.0\n", ""))
        assert code == EXIT_INVALID
        assert "source.disk_radius" in capsys.readouterr().err

    def test_solver_failure(self, tmp_path):
        text = SYMMETRIC.replace("n_t = 16", "n_t = 16\nmax_iter = 1\ncontinuation_steps = 1")
        text = text.replace("p = [0.5, 0.28867513459481287]", "p = [0.5, 0.8]")
        code, _ = run(tmp_path, "solve", text)
        assert code == EXIT_SOLVER

    def test_optimize(self, tmp_path):
        code, out = run(tmp_path, "optimize", SYMMETRIC)
        assert code == EXIT_OK
        rep = read_report(out / "report.json")
        assert rep["candidates"] > 0 and rep["seed"] == 0
        header, trace = read_csv(out / "trace.csv")
        assert header == ["iteration", "p_x", "p_y", "G", "best_G"]
        assert np.all(np.diff(trace[:, 4]) <= 0)
        assert trace[:, 4].min() == rep["G"]

    def test_verify(self, tmp_path):
        code, out = run(tmp_path, "verify", SYMMETRIC)
        assert code == EXIT_OK
        rep = read_report(out / "report.json")
        assert rep["slope"] >= 0.9 and rep["slope_ok"]
        header, rows = read_csv(out / "convergence.csv")
        assert rows.shape == (4, 5) and header[0] == "eps"

    def test_verify_slope_check(self, tmp_path):
        code, _ = run(tmp_path, "verify", SYMMETRIC.replace("levels = 4", "levels = 4\nmin_slope = 1.5"))
        assert code == EXIT_CHECK

    def test_verify_short_ladder(self, tmp_path, capsys):
        code, _ = run(tmp_path, "verify", SYMMETRIC.replace("levels = 4", "levels = 1"))
        assert code == EXIT_INVALID
        assert "need >= 3 levels" in capsys.readouterr().err

    def test_verify_case_2(self, tmp_path, capsys):
        code, _ = run(tmp_path, "verify", SYMMETRIC.replace("[120.0, 120.0, 120.0]", "[190.0, 85.0, 85.0]"))
        assert code == EXIT_UNSUPPORTED
        assert "unsupported" in capsys.readouterr().err

    def test_verify_needs_angles(self, tmp_path, capsys):
        code, _ = run(tmp_path, "verify", SYMMETRIC.replace("jump_angles_deg = [120.0, 120.0, 120.0]\n", ""))
        assert code == EXIT_INVALID
        assert "source.jump_angles_deg" in capsys.readouterr().err

    def test_report_is_json(self, tmp_path):
        _, out = run(tmp_path, "solve", SYMMETRIC)
        json.loads((out / "report.json").read_text())
