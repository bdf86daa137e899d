import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from equibound import bundled_model_path
from equibound.cli import main
from equibound.output import read_bounds, read_grid

BD = str(bundled_model_path("birth_death"))
ES = str(bundled_model_path("exclusive_switch"))


def run_cli(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


@pytest.fixture(scope="module")
def bd_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bd")
    assert run_cli("run", "--model", BD, "--epsilon", "0.2", "--out", out, "--emit-plot-data", "X") == 0
    return out


def test_run_birth_death(bd_run):
    rows = list(csv.reader(open(bd_run / "bounds.csv")))
    assert rows[0] == ["X", "cond_lower", "cond_upper", "uncond_lower", "uncond_upper"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
    summary = json.loads((bd_run / "summary.json").read_text())
    assert summary["window_size"] == 3
    assert summary["c"] == 2.0 and summary["gamma"] == 8.0
    assert summary["factorizations"] == 1
    assert summary["tail_bound"] == 0.2
    assert (bd_run / "timings.json").exists()


def test_bounds_csv_round_trip(bd_run):
    bounds, species = read_bounds(bd_run / "summary.json")
    assert species == ["X"]
    assert bounds.violations() == []
    np.testing.assert_allclose(bounds.cond_lower, [8 / 13, 5 / 17, 1 / 17], rtol=1e-15)


def test_one_species_plot_grid(bd_run):
    grid = read_grid(bd_run / "plot_upper.dat")
    assert sorted(grid) == [(0, 0), (1, 0), (2, 0)]
    gap = read_grid(bd_run / "plot_gap.dat")
    assert all(v >= 0 for v in gap.values())


def test_missing_epsilon_is_usage_error(tmp_path, capsys):
    assert run_cli("run", "--model", BD, "--out", tmp_path) == 2
    assert "--epsilon" in capsys.readouterr().err


@pytest.mark.parametrize("eps", ["0", "1", "1.5", "-0.1"])
def test_epsilon_out_of_range(tmp_path, eps):
    assert run_cli("run", "--model", BD, "--epsilon", eps, "--out", tmp_path) == 2


def test_bad_model_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.mpm"
    bad.write_text("species: X\nclass a: rate = 2*Z ; change = (+1)\ninit: (0)\n")
    assert run_cli("run", "--model", bad, "--epsilon", "0.2", "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "Z" in err
    assert not (tmp_path / "bounds.csv").exists()


def test_missing_model_file(tmp_path):
    assert run_cli("drift", "--model", tmp_path / "nope.mpm") == 2


def test_compute_error_exit_code(tmp_path, capsys):
    pure_birth = tmp_path / "pb.mpm"
    pure_birth.write_text("species: X\nclass b: rate = 1 ; change = (+1)\ninit: (0)\nlyapunov: X^2\n")
    assert run_cli("run", "--model", pure_birth, "--epsilon", "0.2", "--out", tmp_path) == 1
    assert "[lyapunov]" in capsys.readouterr().err


def test_partial_artifacts_removed(tmp_path):
    code = run_cli("run", "--model", BD, "--epsilon", "0.2", "--out", tmp_path, "--emit-plot-data", "Q")
    assert code == 2
    assert list(tmp_path.iterdir()) == []


def test_oracle_check_passes(bd_run, tmp_path, capsys):
    code = run_cli("oracle", "--model", BD, "--box", "0..30", "--check-against", bd_run / "summary.json", "--out", tmp_path)
    assert code == 0
    check = json.loads((tmp_path / "check.json").read_text())
    assert check["passed"] and check["failures"] == []
    rows = list(csv.reader(open(tmp_path / "oracle.csv")))
    assert len(rows) == 32 and rows[0] == ["X", "pi"]


def test_oracle_detects_corruption(bd_run, tmp_path, capsys):
    corrupt = tmp_path / "corrupt"
    corrupt.mkdir()
    (corrupt / "summary.json").write_text((bd_run / "summary.json").read_text())
    rows = list(csv.reader(open(bd_run / "bounds.csv")))
    rows[2][2] = "0.2"  # cond_upper of X = 1
    with open(corrupt / "bounds.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    code = run_cli("oracle", "--model", BD, "--box", "0..30", "--check-against", corrupt / "summary.json", "--out", tmp_path)
    assert code == 3
    assert "state (1,)" in capsys.readouterr().out


def test_window_and_drift_commands(tmp_path, capsys):
    dump = tmp_path / "w.csv"
    assert run_cli("window", "--model", ES, "--epsilon", "0.1", "--dump-window", dump) == 0
    out = capsys.readouterr().out
    assert "window size: 1230" in out
    assert "G1=1,G2=0,B2=0,B1=1: 443" in out
    assert len(dump.read_text().splitlines()) == 1231
    assert run_cli("drift", "--model", BD) == 0
    out = capsys.readouterr().out
    assert "drift: -4.0*X^2 + 4.0*X + 1.0" in out
    assert "c: 2\n" in out


def test_emit_all_columns(tmp_path):
    cols = tmp_path / "cols.csv"
    assert run_cli("run", "--model", BD, "--epsilon", "0.2", "--out", tmp_path, "--lambda-factor", "2",
                   "--emit-all-columns", cols) == 0
    data = np.loadtxt(cols, delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, 2], [8 / 13, 4 / 13, 1 / 13], atol=1e-14)
    np.testing.assert_allclose(data.sum(axis=0), 1, atol=1e-12)


def test_two_species_plot(tmp_path):
    assert run_cli("run", "--model", ES, "--epsilon", "0.1", "--out", tmp_path, "--emit-plot-data", "P1,P2") == 0
    grid = read_grid(tmp_path / "plot_upper.dat")
    assert (0, 0) in grid and max(a for a, _ in grid) > 10


def test_repeated_runs_are_byte_identical(tmp_path):
    blobs = []
    for _ in range(2):
        assert run_cli("run", "--model", ES, "--epsilon", "0.1", "--out", tmp_path, "--emit-plot-data", "P1,P2") == 0
        blobs.append({p.name: p.read_bytes() for p in tmp_path.iterdir() if p.name != "timings.json"})
    assert blobs[0] == blobs[1]
    assert set(blobs[0]) == {"bounds.csv", "summary.json", "plot_upper.dat", "plot_gap.dat"}


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "equibound.cli", "drift", "--model", BD],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and "c: 2" in proc.stdout
