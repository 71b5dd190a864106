import json
import subprocess
import sys

import pytest

from helmshift.cli import main


def run(*args):
    return subprocess.run([sys.executable, "-m", "helmshift.cli", *args], capture_output=True, text=True)


def test_no_arguments_usage():
    proc = run()
    assert proc.returncode == 2
    assert "usage" in proc.stderr


def test_unknown_flag():
    proc = run("map", "--k", "1", "--ell", "5", "--bogus")
    assert proc.returncode == 2
    assert "usage" in proc.stderr


def test_runtime_failure_exit_code(capsys):
    assert main(["map", "--k", "100", "--ell", "6", "--p", "5"]) == 1
    assert "error" in capsys.readouterr().err


def test_map_command(capsys):
    assert main(["map", "--k", "450", "--ell", "10", "--p", "1"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(1.48, abs=5e-3)


def test_map_with_coefficient_file(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"p": 1, "kc0": 0.0, "kc1": 10.0, "a0": 0.0, "a1": 1.0, "meta": {}}))
    assert main(["map", "--k", "10", "--ell", "4", "--coeffs", str(path)]) == 0
    assert float(capsys.readouterr().out) == 1.0


def test_sigma_c_command(capsys):
    assert main(["lfa", "sigma-c", "--h", "0.03125", "--kh-list", "0.1,0.5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "kh,sigma_c" and len(lines) == 3
    first, second = (float(ln.split(",")[1]) for ln in lines[1:])
    assert second >= first


def test_rho_command(tmp_path, capsys):
    surface = tmp_path / "rho.csv"
    assert main(["lfa", "rho", "--k", "8", "--h", "0.03125", "--sigma", "2", "--line", "--surface", str(surface)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("rho_loc=")
    assert len(surface.read_text().splitlines()) == 1 + 129


def test_sample_fit_pipeline(tmp_path, capsys):
    samples = tmp_path / "s.csv"
    coeffs = tmp_path / "c.json"
    assert main(["sample", "--p", "1", "--ell", "3,4", "--count", "4", "--seed", "2", "--out", str(samples)]) == 0
    assert len(samples.read_text().splitlines()) == 1 + 8
    assert main(["fit", "--in", str(samples), "--p", "1", "--epochs", "200", "--out", str(coeffs)]) == 0
    doc = json.loads(coeffs.read_text())
    assert doc["p"] == 1 and doc["meta"]["epochs"] == 200


def test_solve_command(tmp_path, capsys):
    report = tmp_path / "r.json"
    argv = ["solve", "--profile", "wedge", "--p", "1", "--ell", "5", "--kmax", "10",
            "--shifts", "none,k,map", "--source", "0.4,0.6", "--report", str(report)]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "Speed-up" in out
    doc = json.loads(report.read_text())
    assert [r["label"] for r in doc["runs"]] == ["none", "k", "map"]
    assert doc["meta"]["source"] == [0.4, 0.6]


def test_solve_raster_profile(tmp_path, capsys):
    raster = tmp_path / "v.txt"
    raster.write_text("VPROF 2 2\n1 2\n3 4\n")
    out = tmp_path / "r.csv"
    argv = ["solve", "--profile", f"raster:{raster}", "--ell", "4", "--kmax", "5", "--shifts", "none", "--report", str(out)]
    assert main(argv) == 0
    assert len(out.read_text().splitlines()) == 2


def test_solve_bad_source(capsys):
    assert main(["solve", "--kmax", "5", "--ell", "4", "--source", "1.5,0.5"]) == 1


def test_selftest(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5
