import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from helmshift import shift_model
from helmshift.errors import (
    BreakdownError,
    ConfigurationError,
    EmptyDatasetError,
    NonFiniteObjectiveError,
    ParseError,
    TrainingDivergedError,
)
from helmshift.oracles import dense_scan, loss_oracle
from helmshift.shift_model import (
    CSV_HEADER,
    FitConfig,
    SampleRecord,
    ShiftMapCoefficients,
    ShiftObjective,
    admissible_k,
    bundled_coefficients,
    fit,
    generate_dataset,
    generate_sample,
    golden_section,
    lfa_comparison,
    load_coefficients,
    regression_loss,
    samples_from_csv,
    samples_to_csv,
    save_coefficients,
    sigma_map,
)

INV_PHI = (math.sqrt(5) - 1) / 2


def synthetic(coeffs, ells, per_level, seed=0, p=1):
    rng = np.random.default_rng(seed)
    out = []
    for ell in ells:
        lo, hi = admissible_k(p, ell)
        for k in rng.uniform(lo, hi, per_level):
            out.append(SampleRecord(float(k), ell, p, sigma_map(k, ell, coeffs), 0.5, 0, 10))
    return out


# --- coefficients ----------------------------------------------------------


def test_bundled_values():
    assert bundled_coefficients(1).as_array().tolist() == [
        0.4592788619853418,
        2.5790032999702346,
        -0.6261637288068426,
        1.7580549857142198,
    ]
    assert bundled_coefficients(2).as_array().tolist() == [
        0.5736926870738827,
        2.5729974893966001,
        -0.6615199737374460,
        1.5966386518185063,
    ]
    assert bundled_coefficients(3).as_array().tolist() == [
        0.6305770719029798,
        2.4284320222555804,
        -0.4465407372367102,
        0.1287828338493968,
    ]


def test_bundled_unsupported_order():
    with pytest.raises(ConfigurationError):
        bundled_coefficients(4)


def test_coefficient_checks():
    with pytest.raises(ConfigurationError):
        ShiftMapCoefficients(math.nan, 1.0, 0.0, 1.0)
    with pytest.warns(UserWarning):
        ShiftMapCoefficients(0.1, -1.0, 0.0, 1.0)


def test_coefficient_json_round_trip(tmp_path):
    c = ShiftMapCoefficients(0.1, 2.0, -0.3, 1.5, p=2, meta={"epochs": 10, "lr": 1e-3, "loss": 0.25})
    path = tmp_path / "c.json"
    save_coefficients(c, path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"p", "kc0", "kc1", "a0", "a1", "meta"}
    back = load_coefficients(path)
    assert back == c and back.meta == c.meta


# --- sigma_map -------------------------------------------------------------


def test_map_reference_value():
    c = bundled_coefficients(1)
    kc = c.kc1 * math.exp(c.kc0 * 10)
    alpha = c.a1 * math.exp(c.a0 * 10)
    assert kc == pytest.approx(254.8, abs=0.1)
    assert alpha == pytest.approx(3.36e-3, rel=1e-2)
    value = sigma_map(450, 10, c)
    assert value == 2 - math.exp(-alpha * (450 - kc))
    assert value == pytest.approx(1.48, abs=5e-3)


def test_map_clamps():
    c = bundled_coefficients(2)
    kc = c.kc1 * math.exp(c.kc0 * 7)
    assert sigma_map(kc, 7, c) == 1.0
    assert sigma_map(1e9, 7, c) == 2.0
    assert sigma_map(0.0, 7, c) == 1.0


coef = st.tuples(
    st.floats(-1, 1), st.floats(0.1, 10), st.floats(-1, 0.5), st.floats(0.01, 5)
)


@settings(max_examples=200, deadline=None)
@given(coef, st.integers(2, 12), st.floats(0, 5000), st.floats(0, 5000))
def test_map_monotone_and_bounded(x, ell, k1, k2):
    c = ShiftMapCoefficients(*x)
    lo, hi = sorted((k1, k2))
    s_lo, s_hi = sigma_map(lo, ell, c), sigma_map(hi, ell, c)
    assert 1.0 <= s_lo <= 2.0 and 1.0 <= s_hi <= 2.0
    assert s_lo <= s_hi


@settings(max_examples=100, deadline=None)
@given(coef, st.integers(3, 10), st.floats(5, 3000))
def test_map_gradient_finite_difference(x, ell, k):
    x = np.array(x)
    sigma, grad = shift_model._map_and_grad(x, np.array([k]), np.array([float(ell)]))
    t = -x[3] * math.exp(x[2] * ell) * (k - x[1] * math.exp(x[0] * ell))
    assume(math.log(1e-3) < t < math.log(0.999))
    for i in range(4):
        d = np.zeros(4)
        d[i] = 1e-7 * max(1.0, abs(x[i]))
        fd = (shift_model._map_and_grad(x + d, np.array([k]), np.array([float(ell)]))[0]
              - shift_model._map_and_grad(x - d, np.array([k]), np.array([float(ell)]))[0]) / (2 * d[i])
        assert grad[i, 0] == pytest.approx(fd[0], rel=1e-4, abs=1e-6)


def test_map_gradient_zero_when_clamped():
    x = bundled_coefficients(1).as_array()
    _, grad = shift_model._map_and_grad(x, np.array([1.0, 1e8]), np.array([6.0, 6.0]))
    assert np.all(grad == 0)


# --- golden section --------------------------------------------------------


def test_golden_quadratic():
    assert golden_section(lambda s: (s - 1.3) ** 2, 1, 2, 1e-2) == pytest.approx(1.3, abs=1e-2)


def test_golden_increasing():
    assert golden_section(lambda s: s, 1, 2, 1e-2) == pytest.approx(1.0, abs=1e-2)


def test_golden_kink_vs_dense_scan():
    f = lambda s: abs(s - INV_PHI - 1)
    x = golden_section(f, 1, 2, 1e-2)
    best, _ = dense_scan(f, 1000)
    assert abs(x - best) <= 1e-2
    assert x == pytest.approx(1 + INV_PHI, abs=1e-2)


def test_golden_stays_in_bracket_and_shrinks():
    seen = []

    def f(s):
        seen.append(s)
        return (s - 1.77) ** 2

    golden_section(f, 1, 2, 1e-2)
    assert all(1 <= s <= 2 for s in seen)
    # classic rule: two initial points, then one per reduction by 1/phi
    expected = math.ceil(math.log(1e-2) / math.log(INV_PHI)) + 2
    assert len(seen) == expected
    assert len(seen) == 12


def test_golden_nonfinite():
    with pytest.raises(NonFiniteObjectiveError) as info:
        golden_section(lambda s: math.nan if s > 1.5 else s, 1, 2)
    assert info.value.x > 1.5


def test_golden_bad_bracket():
    with pytest.raises(ValueError):
        golden_section(lambda s: s, 2, 1)


# --- sampling --------------------------------------------------------------


def test_admissible_interval():
    assert admissible_k(1, 5) == (6.0, 24.0)
    assert admissible_k(3, 4) == (9.0, 36.0)
    with pytest.raises(ConfigurationError):
        generate_sample(1, 4, 100.0, 0)


def test_sample_against_dense_scan():
    p, ell = 1, 5
    k = 0.5 * 2**ell
    rec = generate_sample(p, ell, k, seed=3)
    assert 1 <= rec.sigma_hat <= 2
    obj = ShiftObjective(p, ell, k, 3)
    _, scan_min = dense_scan(obj, 11)
    assert rec.rho <= obj(2.0) + 5e-3
    assert rec.rho <= scan_min + 5e-3
    assert 10 <= len(rec.evaluations) <= 14


def test_sample_reproducible():
    a = generate_sample(1, 4, 8.0, seed=11)
    b = generate_sample(1, 4, 8.0, seed=11)
    assert a == b
    assert a.evaluations == b.evaluations


def test_flat_objective_flag():
    rec = generate_sample(1, 3, 2.0, seed=0, tol=0.99)
    assert rec.flat
    assert rec.iters == 1


def test_solver_failure_scores_one(monkeypatch):
    def broken(*args, **kwargs):
        raise BreakdownError("forced")

    monkeypatch.setattr("helmshift.krylov.fgmres", broken)
    obj = ShiftObjective(1, 3, 4.0, 0)
    assert obj(1.5) == 1.0
    assert obj.failures and obj.failures[0][0] == 1.5


def test_rhs_drawn_once():
    obj = ShiftObjective(1, 3, 4.0, 7)
    before = obj.rhs.copy()
    obj(1.2)
    obj(1.8)
    assert np.array_equal(before, obj.rhs)
    assert np.all(np.abs(obj.rhs.real) <= 1) and np.all(obj.rhs.imag == 0)


def test_generate_dataset_layout():
    recs = generate_dataset(1, [3, 4], 3, seed=5, max_iter=20)
    assert [r.ell for r in recs] == [3, 3, 3, 4, 4, 4]
    for r in recs:
        lo, hi = admissible_k(1, r.ell)
        assert lo <= r.k <= hi and 1 <= r.sigma_hat <= 2


# --- CSV -------------------------------------------------------------------


def test_csv_round_trip():
    recs = synthetic(bundled_coefficients(1), [4, 5], 5)
    text = samples_to_csv(recs)
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert samples_from_csv(text) == recs


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("a,b\n", 1),
        (",".join(CSV_HEADER) + "\n1.0,4,1,1.5,0.3,0,7\n1.0,4,1,1.5\n", 3),
        (",".join(CSV_HEADER) + "\nx,4,1,1.5,0.3,0,7\n", 2),
        (",".join(CSV_HEADER) + "\n1.0,4,1,nan,0.3,0,7\n", 2),
    ],
)
def test_csv_errors(text, line):
    with pytest.raises(ParseError) as info:
        samples_from_csv(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


# --- regression ------------------------------------------------------------


def test_loss_zero_for_exact_coefficients():
    c = bundled_coefficients(1)
    assert regression_loss(c, synthetic(c, [4, 5, 6], 6), 1) == 0.0


def test_loss_single_sample():
    c = bundled_coefficients(1)
    target = sigma_map(300.0, 8, c)
    rec = SampleRecord(300.0, 8, 1, target + 0.1, 0.5, 0, 1)
    assert regression_loss(c, [rec], 1) == pytest.approx(0.01, rel=1e-12)


def test_loss_matches_double_loop(rng):
    data = []
    for _ in range(50):
        p = int(rng.integers(1, 3))
        ell = int(rng.integers(4, 8))
        lo, hi = admissible_k(p, ell)
        data.append(SampleRecord(float(rng.uniform(lo, hi)), ell, p, float(rng.uniform(1, 2)), 0.5, 0, 1))
    for p in (1, 2):
        x = rng.normal(size=4) * 0.3 + np.array([0.3, 2.0, -0.5, 1.0])
        ref = loss_oracle(x, data, p)
        assert regression_loss(x, data, p) == pytest.approx(ref, rel=1e-12)


def test_loss_empty():
    with pytest.raises(EmptyDatasetError):
        regression_loss(bundled_coefficients(1), [SampleRecord(10.0, 5, 2, 1.5, 0.5, 0, 1)], 1)


def test_fit_recovers_predictions():
    truth = bundled_coefficients(1)
    data = synthetic(truth, range(4, 11), 15)
    c = fit(data, 1, FitConfig(epochs=20_000))
    pred = np.array([sigma_map(r.k, r.ell, c) for r in data])
    target = np.array([r.sigma_hat for r in data])
    assert np.sqrt(np.mean((pred - target) ** 2)) <= 0.02
    assert c.meta["epochs"] == 20_000


def test_fit_never_worse_than_start():
    data = synthetic(bundled_coefficients(2), [4, 5], 6, p=2)
    history = []
    cfg = FitConfig(epochs=50)
    c = fit(data, 2, cfg, history)
    assert regression_loss(c, data, 2) <= regression_loss(np.array(cfg.init), data, 2)
    assert len(history) == 50


def test_fit_needs_enough_data():
    data = synthetic(bundled_coefficients(1), [5], 10)
    with pytest.raises(ConfigurationError):
        fit(data, 1)


def test_fit_divergence_reported():
    data = synthetic(bundled_coefficients(1), [4, 5], 6)
    with pytest.raises(TrainingDivergedError) as info:
        fit(data, 1, FitConfig(learning_rate=1e3, epochs=100))
    assert info.value.epoch >= 2


def test_fit_config_validation():
    with pytest.raises(ConfigurationError):
        FitConfig(learning_rate=0)
    with pytest.raises(ConfigurationError):
        FitConfig(epochs=0)


# --- LFA comparison --------------------------------------------------------


def test_lfa_comparison_table():
    h = 2.0**-5
    rows = lfa_comparison(h, [1, 2], [0.25 / h], max_iter=30)
    assert len(rows) == 1 * (1 + 2)
    assert [r["source"] for r in rows] == ["lfa", "sampled", "sampled"]
    for r in rows[1:]:
        assert 1 <= r["sigma"] <= 2


def test_lfa_comparison_sampled_not_below_lfa():
    h = 2.0**-5
    rows = lfa_comparison(h, [4], [0.5 / h])
    lfa_row, sampled = rows
    assert sampled["sigma"] >= lfa_row["sigma"] - 0.1
