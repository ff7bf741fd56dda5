import math
import subprocess
import sys

import numpy as np
import pytest

from platevem.adapt import StudyHistory, mesh_sequence_study
from platevem.cli import main, run, sweep
from platevem.io import (ConfigError, RunConfig, confined_path, eval_number, export_snapshot,
                         format_config, history_header, parse_config_text, read_history_csv,
                         read_snapshot, write_history_csv)
from platevem.mesh import Mesh, generate_structured, load_mesh, refine


def write_cfg(path, out, **kw):
    lines = [f"output_dir = {out}"] + [f"{k} = {v}" for k, v in kw.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestConfig:
    def test_defaults_and_comments(self):
        cfg = parse_config_text("# study\nproblem = SSP  # simply supported\n\nn = 8\n")
        assert (cfg.problem, cfg.n, cfg.dorfler_delta, cfg.alpha_delta, cfg.alpha_0) == ("SSP", 8, 0.5, 1.0, 1.0)

    def test_expressions(self):
        cfg = parse_config_text("exact_eigenvalues = 4*pi**4, 1294.93397959171\nalpha_0 = 1/64\n")
        assert cfg.exact_eigenvalues == [4 * math.pi**4, 1294.93397959171]
        assert cfg.alpha_0 == 1 / 64
        assert eval_number("2**-8") == 1 / 256

    @pytest.mark.parametrize("text", ["__import__('os')", "pi()", "x", "1 +"])
    def test_unsafe_expressions_rejected(self, text):
        with pytest.raises(ValueError):
            eval_number(text)

    def test_every_problem_listed(self):
        text = "problem = XX\nn = 0\ndorfler_delta = 2\nalpha_0 = -1\ncolour = red\nmax_steps = many\n"
        with pytest.raises(ConfigError) as info:
            parse_config_text(text)
        fields = {p.split(":")[0] for p in info.value.problems}
        assert {"problem", "n", "dorfler_delta", "alpha_0", "colour", "max_steps"} <= fields

    def test_geometry_file_and_lshape_parity(self):
        assert RunConfig(geometry="file:wing.mesh").mesh_file == "wing.mesh"
        with pytest.raises(ConfigError, match="even"):
            RunConfig(geometry="lshape", n=5).validate()

    def test_format_round_trip(self):
        cfg = RunConfig(problem="SSP", exact_eigenvalues=[4 * math.pi**4], alpha_delta=1 / 3)
        assert parse_config_text(format_config(cfg)) == cfg


def small_history(steps=2, exact=None, k=1):
    meshes = [generate_structured("square", 2 * 2**j) for j in range(steps)]
    return mesh_sequence_study(meshes, "SSP", k=k, exact=exact, keep_meshes=True)


class TestHistoryCsv:
    def test_header_only_for_empty_history(self, tmp_path):
        p = tmp_path / "h.csv"
        write_history_csv(StudyHistory(num_eigs=2), p)
        assert p.read_text().splitlines() == [",".join(history_header(2))]
        assert history_header(2) == ["step", "ndofs", "hmax", "lambda_1", "lambda_2", "err_1", "err_2",
                                     "eta2", "xi2", "j2", "s2", "eff_1", "eff_2", "rate_err", "rate_eta2"]

    def test_one_step_one_row(self, tmp_path):
        p = tmp_path / "h.csv"
        write_history_csv(small_history(1), p)
        header, rows = read_history_csv(p)
        assert len(rows) == 1
        assert rows[0]["err_1"] is None and rows[0]["rate_err"] is None and rows[0]["rate_eta2"] is None

    def test_round_trip_bit_exact(self, tmp_path):
        h = small_history(3, exact=[4 * np.pi**4, 25 * np.pi**4], k=2)
        p = tmp_path / "h.csv"
        write_history_csv(h, p)
        _, rows = read_history_csv(p)
        for rec, row in zip(h, rows):
            assert row["ndofs"] == rec.ndofs and row["hmax"] == rec.hmax
            assert row["lambda_1"] == rec.eigenvalues[0] and row["lambda_2"] == rec.eigenvalues[1]
            assert (row["eta2"], row["xi2"], row["j2"], row["s2"]) == rec.totals()
            assert row["err_1"] == rec.errors[0]
        assert [r["rate_err"] for r in rows[1:]] == list(h.error_rates()[1:])
        assert [r["rate_eta2"] for r in rows[1:]] == list(h.eta2_rates()[1:])
        # floats carry 17 significant digits
        assert all(len(c.lstrip("-").replace(".", "").split("e")[0].lstrip("0")) <= 17
                   for c in p.read_text().splitlines()[1].split(","))


class TestSnapshot:
    def test_single_square_zero(self, tmp_path, unit_square_mesh):
        p = tmp_path / "u.vtk"
        export_snapshot(unit_square_mesh, np.zeros(12), p)
        pts, polys, scal = read_snapshot(p)
        assert pts.shape == (4, 3) and np.all(pts[:, 2] == 0)
        assert len(polys) == 1 and np.all(scal == 0)
        assert p.read_text().startswith("# vtk DataFile Version")

    def test_two_by_two(self, tmp_path):
        mesh = generate_structured("square", 2)
        u = np.arange(27.0)
        export_snapshot(mesh, u, tmp_path / "u.vtk")
        pts, polys, scal = read_snapshot(tmp_path / "u.vtk")
        assert pts.shape == (9, 3) and len(polys) == 4
        assert np.array_equal(pts[:, 2], u[0::3]) and np.array_equal(scal, u[0::3])
        assert [tuple(p) for p in mesh.polygons] == polys

    def test_refined_lshape_smoke(self, tmp_path):
        mesh = generate_structured("lshape", 4)
        corner = np.array([0.5, 0.5])
        for _ in range(9):
            d = np.linalg.norm(mesh.centroids - corner, axis=1)
            mesh = refine(mesh, np.flatnonzero(d <= d.min() * 1.5 + 1e-12))
        assert mesh.euler_characteristic() == 1
        export_snapshot(mesh, np.ones(3 * mesh.num_vertices), tmp_path / "l.vtk")
        pts, polys, _ = read_snapshot(tmp_path / "l.vtk")
        assert len(pts) == mesh.num_vertices and len(polys) == mesh.num_polygons
        assert Mesh(pts[:, :2], polys).areas.sum() == pytest.approx(0.75, rel=1e-12)

    def test_wrong_size_rejected(self, tmp_path, unit_square_mesh):
        with pytest.raises(ValueError):
            export_snapshot(unit_square_mesh, np.zeros(5), tmp_path / "u.vtk")


class TestRun:
    def test_cp_square_three_rows(self, tmp_path):
        cfg = write_cfg(tmp_path / "a.cfg", tmp_path / "out", problem="CP", n=4, max_steps=3)
        assert main(["run", str(cfg)]) == 0
        _, rows = read_history_csv(tmp_path / "out" / "history.csv")
        assert len(rows) == 3
        assert [r["ndofs"] for r in rows] == [27, 147, 675]
        assert sorted(p.name for p in (tmp_path / "out" / "snapshots").iterdir()) == [
            "u_000.vtk", "u_001.vtk", "u_002.vtk"]
        assert load_mesh(tmp_path / "out" / "meshes" / "mesh_002.txt").num_polygons == 256

    def test_ssp_error_column(self, tmp_path):
        cfg = RunConfig(problem="SSP", n=4, max_steps=4, exact_eigenvalues=[4 * math.pi**4],
                        output_dir=str(tmp_path / "o"))
        run(cfg)
        _, rows = read_history_csv(tmp_path / "o" / "history.csv")
        errs = [r["err_1"] for r in rows]
        assert all(e is not None and e > 0 for e in errs)
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert all(r["rate_err"] is not None for r in rows[1:])

    def test_adaptive_run(self, tmp_path):
        cfg = RunConfig(problem="CP", geometry="lshape", n=4, mode="adaptive", max_steps=3,
                        output_dir=str(tmp_path / "o"))
        h = run(cfg)
        assert len(h) == 3
        assert len(list((tmp_path / "o" / "snapshots").iterdir())) == 3

    def test_file_geometry(self, tmp_path):
        assert main(["mesh", "voronoi", "12", "-o", str(tmp_path / "v.mesh"), "--lloyd", "2", "--seed", "3"]) == 0
        cfg = write_cfg(tmp_path / "f.cfg", tmp_path / "o", geometry=f"file:{tmp_path / 'v.mesh'}",
                        problem="SSP", max_steps=2)
        assert main(["run", str(cfg)]) == 0
        _, rows = read_history_csv(tmp_path / "o" / "history.csv")
        assert len(rows) == 2 and rows[1]["ndofs"] > rows[0]["ndofs"]

    def test_byte_identical(self, tmp_path):
        out = []
        for name in ("a", "b"):
            cfg = RunConfig(geometry="voronoi", n=20, lloyd_iters=2, rng_seed=5, max_steps=2,
                            mode="adaptive", output_dir=str(tmp_path / name))
            run(cfg)
            out.append((tmp_path / name / "history.csv").read_bytes())
        assert out[0] == out[1]

    def test_sweep_one_csv_per_alpha(self, tmp_path):
        cfg = RunConfig(problem="SSP", n=2, max_steps=2, output_dir=str(tmp_path / "s"))
        res = sweep(cfg, [1 / 256, 1, 64])
        names = sorted(p.name for p in (tmp_path / "s").iterdir())
        assert names == ["history_alpha_0.00390625.csv", "history_alpha_1.csv", "history_alpha_64.csv"]
        assert len({h[-1].lam for h in res.values()}) == 3

    def test_sweep_cli(self, tmp_path):
        cfg = write_cfg(tmp_path / "s.cfg", tmp_path / "s", problem="SSP", n=2, max_steps=1)
        assert main(["sweep", str(cfg), "--alphas", "1/256,1/64,1/4,1,4,64,256"]) == 0
        assert len(list((tmp_path / "s").glob("history_alpha_*.csv"))) == 7


class TestFailures:
    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("problem = XX\nn = -1\n")
        assert main(["run", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "problem" in err and "n:" in err

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.cfg")]) == 1

    def test_initial_mesh_too_large(self, tmp_path):
        cfg = write_cfg(tmp_path / "a.cfg", tmp_path / "o", n=16, max_dofs=10)
        assert main(["run", str(cfg)]) == 1

    def test_confinement(self, tmp_path):
        assert confined_path(tmp_path, "a/b.csv") == (tmp_path / "a" / "b.csv").resolve()
        for bad in ("../x.csv", "/etc/passwd", "a/../../x"):
            with pytest.raises(ValueError, match="escapes"):
                confined_path(tmp_path, bad)

    def test_artifacts_stay_in_output_dir(self, tmp_path):
        out = tmp_path / "o"
        run(RunConfig(n=2, max_steps=2, output_dir=str(out)))
        files = [p for p in tmp_path.rglob("*") if p.is_file()]
        assert files and all(out in p.parents for p in files)


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "platevem.cli", "mesh", "square", "3", "-o",
                        str(tmp_path / "s.mesh")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert load_mesh(tmp_path / "s.mesh").num_polygons == 9
