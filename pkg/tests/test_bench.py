import json

import numpy as np
import pytest

from helmshift.bench import (
    ScenarioConfig,
    ShiftRun,
    SolveReport,
    emit_report,
    load_velocity_raster,
    parse_raster,
    parse_report_json,
    run_scenario,
    wedge_profile,
)
from helmshift.errors import ConfigurationError, ParseError
from helmshift.grid_fem import GridLevel, HelmholtzOperator, ShiftSpec, WavenumberField, assemble_rhs, source_gaussian
from helmshift.krylov import fgmres
from helmshift.twogrid import TwoGrid


# --- profiles --------------------------------------------------------------


def test_wedge_profile():
    k = wedge_profile(1.0)
    x, y = np.random.default_rng(1).uniform(0, 1, (2, 10**6))
    mu = k(x, y)
    assert len(np.unique(mu)) == 3
    assert mu.min() >= 0 and mu.max() <= 1
    assert np.array_equal(mu, k(x, y))


def test_wedge_band_geometry():
    k = wedge_profile(1.0)
    assert k(np.array(0.5), np.array(0.2)) == 0.55
    # the lower interface rises with x
    assert k(np.array(0.0), np.array(0.37)) == 0.75
    assert k(np.array(1.0), np.array(0.37)) == 0.55
    assert k(np.array(0.5), np.array(0.9)) == 1.0


def write(tmp_path, text, name="v.txt"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_raster_vprof_corners_and_center(tmp_path):
    k = load_velocity_raster(write(tmp_path, "VPROF 2 2\n0 1\n2 3\n"))
    corners = k(np.array([0.0, 1.0, 0.0, 1.0]), np.array([0.0, 0.0, 1.0, 1.0]))
    np.testing.assert_allclose(corners, [0, 1 / 3, 2 / 3, 1])
    assert float(k(np.array(0.5), np.array(0.5))) == pytest.approx(0.5)


def test_raster_csv_matches_vprof(tmp_path):
    a = load_velocity_raster(write(tmp_path, "VPROF 3 2\n1 5 2 7 3 9\n"), k_max=10)
    b = load_velocity_raster(write(tmp_path, "1,5,2\n7,3,9\n", "v.csv"), k_max=10)
    x, y = np.random.default_rng(0).uniform(0, 1, (2, 50))
    np.testing.assert_array_equal(a(x, y), b(x, y))


def test_constant_raster(tmp_path):
    k = load_velocity_raster(write(tmp_path, "VPROF 2 2\n5 5 5 5\n"), k_max=3.0)
    np.testing.assert_array_equal(k(np.array([0.1, 0.9]), np.array([0.3, 0.2])), [3.0, 3.0])


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("VPROF 2\n", 1),
        ("VPROF a b\n", 1),
        ("VPROF 2 2\n1 2\n3 x\n", 3),
        ("VPROF 2 2\n1 2\ninf 4\n", 3),
        ("VPROF 2 2\n1 2 3\n", 2),
        ("1,2\n3,4,5\n", 2),
        ("1,2\n3,nan\n", 2),
    ],
)
def test_raster_parse_errors(text, line):
    with pytest.raises(ParseError) as info:
        parse_raster(text)
    assert info.value.line == line


def test_raster_row_order():
    values = parse_raster("VPROF 2 3\n0 0\n1 1\n2 2\n")
    assert values.shape == (3, 2)
    assert values[:, 0].tolist() == [0, 1, 2]


# --- scenario config -------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        {"source": (0.0, 0.5)},
        {"source": (0.5, 1.2)},
        {"shifts": ()},
        {"shifts": ("none", "k^3")},
        {"profile": "marmousi"},
        {"profile": "raster"},
        {"threads": 0},
    ],
)
def test_scenario_validation(kw):
    with pytest.raises(ConfigurationError):
        ScenarioConfig(**kw)


# --- runs ------------------------------------------------------------------


def test_easy_regime_all_shifts():
    level = GridLevel(6, 1)
    cfg = ScenarioConfig(profile="constant", ell=6, k_max=0.1 / level.h)
    rep = run_scenario(cfg)
    assert [r.label for r in rep.runs] == list(cfg.shifts)
    for r in rep.runs:
        assert r.converged and r.iterations <= 25
        assert r.relative_residual <= 1.01 * cfg.tol
    assert rep.meta["dofs"] == level.dofs == 65**2
    assert rep.meta["threads"] == 1


def test_baseline_only_has_no_speedup():
    rep = run_scenario(ScenarioConfig(profile="constant", ell=5, k_max=3.0, shifts=("none",)))
    assert rep.runs[0].speedup is None
    assert "%" not in emit_report(rep, "text").decode()


def test_speedup_relative_to_baseline():
    rep = run_scenario(ScenarioConfig(ell=5, k_max=12.0, shifts=("none", "k", "k^2")))
    base = rep.run("none")
    for label in ("k", "k^2"):
        r = rep.run(label)
        assert r.speedup == pytest.approx(100 * (base.wall_time / r.wall_time - 1))


def test_nonconvergence_recorded():
    rep = run_scenario(ScenarioConfig(ell=5, k_max=18.0, shifts=("none", "k^2"), max_iter=3))
    assert all(not r.converged and r.iterations == 3 for r in rep.runs)
    assert all(r.speedup is None for r in rep.runs)


def test_true_residual_from_scratch():
    level = GridLevel(6, 2)
    k = wedge_profile(40.0)
    A = HelmholtzOperator(level, k)
    F = assemble_rhs(level, source_gaussian((0.3, 0.7)))
    x, rep = fgmres(A, TwoGrid(level, k, ShiftSpec.map(2)), F, tol=1e-8)
    assert rep.converged
    Am = A.assemble()
    assert np.linalg.norm(F - Am @ x) / np.linalg.norm(F) <= 1.01e-8


def test_repeat_runs_identical():
    cfg = ScenarioConfig(ell=6, k_max=30.0, shifts=("none", "map"))
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert [r.iterations for r in a.runs] == [r.iterations for r in b.runs]
    assert [r.relative_residual for r in a.runs] == [r.relative_residual for r in b.runs]


# --- reports ---------------------------------------------------------------


def sample_report():
    runs = [
        ShiftRun("none", 412, True, 213.68, 9e-9),
        ShiftRun("k", 330, True, 190.0, 8e-9, speedup=12.46),
        ShiftRun("k^2", 500, False, 900.0, 1e-3),
        ShiftRun("map", 93, True, 130.38, 7e-9, speedup=63.89, sigma=1.48),
    ]
    return SolveReport(runs, {"p": 1, "ell": 10, "k_max": 450.0, "kh": 0.44, "dofs": 1025**2, "max_iter": 500})


def test_json_round_trip():
    rep = sample_report()
    back = parse_report_json(emit_report(rep, "json"))
    assert back == rep
    assert emit_report(rep, "json") == emit_report(back, "json")


def test_csv_rows():
    text = emit_report(sample_report(), "csv").decode().splitlines()
    assert len(text) == 1 + 4
    assert text[0].startswith("label,iterations,converged")


def test_text_table():
    text = emit_report(sample_report(), "text").decode()
    lines = text.splitlines()
    assert "Iter" in lines[1] and "Speed-up" in lines[1]
    row = next(ln for ln in lines if ln.startswith("k^2"))
    assert ">500" in row and "--" in row
    assert "3:33.68" in text and "63.89%" in text


def test_unknown_format():
    with pytest.raises(ConfigurationError):
        emit_report(sample_report(), "xml")
