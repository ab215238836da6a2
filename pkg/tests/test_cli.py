import csv

import numpy as np
import pytest

from dgblowup.cli import ConfigError, build_run_config, main, parse_config_text


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


HEAT = "problem = linear_heat  # pure diffusion\nttol = 1e-4\nstol = 1e-4\np = 2\nn_root = 4\nmax_steps = 10\n"


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_config():
    vals = parse_config_text("# comment\n a = 1 \nstol=2e-3\n\n")
    assert vals == {"a": "1", "stol_plus": "2e-3"}
    with pytest.raises(ConfigError):
        parse_config_text("novalue\n")


def test_build_config_rejects_unknown_keys_and_problems():
    with pytest.raises(ConfigError, match="unknown keys"):
        build_run_config({"frobnicate": "1"})
    with pytest.raises(ConfigError, match="unknown problem"):
        build_run_config({"problem": "nope"})
    with pytest.raises(ConfigError):
        build_run_config({"p": "two"})


def test_hp_flag_sets_default_sigma():
    assert build_run_config({"hp": "true"}).adapt.sigma == 0.47
    assert build_run_config({}).adapt.sigma is None


def test_linear_heat_run(tmp_path, capsys):
    cfg = write_config(tmp_path, HEAT)
    assert main(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    rows = read_rows(tmp_path / "a" / "steps.csv")
    assert len(rows) == 10
    assert all(float(r["delta"]) == 1.0 and float(r["theta"]) == 1.0 for r in rows)
    assert len((tmp_path / "a" / "estimators.log").read_text().splitlines()) == 10
    assert len((tmp_path / "a" / "bound.log").read_text().splitlines()) == 10
    assert "reason = max_steps" in (tmp_path / "a" / "summary.txt").read_text()


def test_runs_are_deterministic(tmp_path):
    cfg = write_config(tmp_path, HEAT)
    for out in ("a", "b"):
        assert main(["run", str(cfg), "--out", str(tmp_path / out)]) == 0
    assert (tmp_path / "a" / "steps.csv").read_bytes() == (tmp_path / "b" / "steps.csv").read_bytes()


def test_snapshots(tmp_path):
    cfg = write_config(tmp_path, HEAT + "snapshot_every = 5\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "s")]) == 0
    snaps = sorted(p.name for p in (tmp_path / "s" / "snapshots").iterdir())
    assert snaps == ["step_000005_field.txt", "step_000005_mesh.txt", "step_000010_field.txt",
                     "step_000010_mesh.txt"]
    table = np.loadtxt(tmp_path / "s" / "snapshots" / "step_000010_field.txt")
    assert table.shape[1] == 2 and table[0, 1] == 0.0


def test_config_errors_exit_2(tmp_path):
    assert main(["run", str(write_config(tmp_path, "bogus = 1\n"))]) == 2
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2
    assert main(["run", str(write_config(tmp_path, HEAT)), "--p", "0"]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["verify", "nothing"]) == 2


def test_solver_abort_exit_3(tmp_path):
    cfg = write_config(tmp_path, "problem = quadratic_gaussian\nmax_dofs = 50\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "c")]) == 3


def test_blowup_summary_recomputable(tmp_path):
    cfg = write_config(tmp_path, "problem = quadratic_gaussian\np = 4\nr0 = 1\nttol = 1e-3\nstol = 1e-3\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "d")]) == 0
    summary = dict(line.split(" = ") for line in (tmp_path / "d" / "summary.txt").read_text().splitlines())
    assert summary["reason"] == "no_root"
    rows = read_rows(tmp_path / "d" / "steps.csv")
    (t0, n0), (t1, n1) = [(float(r["t"]), float(r["U_norm"])) for r in rows[-2:]]
    assert float(summary["T_inf"]) == pytest.approx((t1 * n1 - t0 * n0) / (n1 - n0), rel=1e-14)
    assert int(summary["N"]) == len(rows)


def test_verify_basis_suite(capsys):
    assert main(["verify", "basis"]) == 0
    assert capsys.readouterr().out.startswith("PASS [1]")
