"""Experiment harness: reports, CRN identities, config validation, CLI."""

import json
import math
import os

import numpy as np
import pytest

from cvxorder.coeffs import CoefficientFn
from cvxorder.convexfns import ScalarConvexFn
from cvxorder.dynamics import GridSpec
from cvxorder.errors import (
    BoundsUncertified,
    ConfigError,
    DominationViolated,
    HypothesisUnverifiable,
    ParamOutOfRange,
)
from cvxorder.operators import compare_laplace
from cvxorder.payoffs import PayoffFunctional
from cvxorder.experiments.cli import main as cli_main
from cvxorder.experiments.config import (
    default_config,
    merge_config,
    parse_innovation,
    innovation_to_config,
    validate_config,
)
from cvxorder.experiments.reports import DOMINANCE, VIOLATION, make_report
from cvxorder.experiments.runners import (
    LocalVolModel,
    bs_sandwich,
    completely_monotone_compare,
    counterexample_integrand,
    counterexample_two_period,
    experiment_config,
    ito_integrand_compare,
    mc_compare_european,
    paired_payoff_samples,
    run_experiment,
)

GRID = GridSpec(16, 1.0)
CALL = PayoffFunctional.terminal(ScalarConvexFn.call(100.0))


def test_crn_identity_is_bitwise():
    model = LocalVolModel(CoefficientFn.constant(0.2), 100.0)
    rep = mc_compare_european(model, model, CALL, GRID, 5_000, seed=3)
    assert rep.paired_diff_mean == 0.0 and rep.paired_diff_se == 0.0
    assert rep.verdict == DOMINANCE


def test_mc_compare_dominance_and_violation():
    lo = LocalVolModel(CoefficientFn.constant(0.1), 100.0)
    hi = LocalVolModel(CoefficientFn.constant(0.3), 100.0)
    rep = mc_compare_european(lo, hi, CALL, GRID, 20_000, seed=5)
    assert rep.verdict == DOMINANCE
    swapped = mc_compare_european(hi, lo, CALL, GRID, 20_000, seed=5)
    assert swapped.verdict == VIOLATION


def test_affine_payoff_equality_within_3se():
    lo = LocalVolModel(CoefficientFn.constant(0.1), 100.0)
    hi = LocalVolModel(CoefficientFn.constant(0.3), 100.0)
    identity = PayoffFunctional.terminal(ScalarConvexFn.identity())
    rep = mc_compare_european(lo, hi, identity, GRID, 20_000, seed=6)
    assert abs(rep.paired_diff_mean) <= 3.0 * rep.paired_diff_se


def test_one_sided_calibration_under_equality():
    # affine payoff: both sides are martingales started at the same point, so
    # the one-sided z=3 test should fire at ~0.13%; allow at most 1 in 100.
    lo = LocalVolModel(CoefficientFn.constant(0.1), 100.0)
    hi = LocalVolModel(CoefficientFn.constant(0.3), 100.0)
    identity = PayoffFunctional.terminal(ScalarConvexFn.identity())
    grid = GridSpec(8, 1.0)
    fired = 0
    for seed in range(100):
        rep = mc_compare_european(lo, hi, identity, grid, 10_000, seed=seed)
        fired += rep.verdict == VIOLATION
    assert fired <= 1


def test_threads_do_not_change_samples():
    lo = LocalVolModel(CoefficientFn.constant(0.1), 100.0)
    hi = LocalVolModel(CoefficientFn.constant(0.3), 100.0)
    (a1, b1), _ = paired_payoff_samples([lo, hi], CALL, GRID, 9, 70_000, threads=1)
    (a2, b2), _ = paired_payoff_samples([lo, hi], CALL, GRID, 9, 70_000, threads=4)
    assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


def test_sandwich_requires_certified_bounds():
    unbounded = CoefficientFn.affine(0.1, 0.001)
    with pytest.raises(BoundsUncertified):
        bs_sandwich(unbounded, CALL, GRID, 1_000, 1, 100.0)


def test_sandwich_degenerate_constant_sigma():
    res = bs_sandwich(CoefficientFn.constant(0.2), CALL, GridSpec(64, 1.0), 50_000, 11, 100.0)
    assert res["bs_lower"] == res["bs_upper"]
    assert res["verdict"] == DOMINANCE
    assert abs(res["mc_value"] - res["bs_lower"]) <= 3 * res["mc_se"] + res["delta_n"]
    # intrinsic floor: call value at least (s0 - K)_+ up to noise
    assert res["mc_value"] >= -3 * res["mc_se"]


def test_ito_trivial_equality_and_monitoring():
    h = np.full(GRID.n, 0.5)
    from cvxorder.dynamics import deterministic_rule

    rep = ito_integrand_compare(
        deterministic_rule(h), h, PayoffFunctional.terminal(ScalarConvexFn.call(0.0)),
        GRID, 10_000, seed=2, direction="upper",
    )
    assert rep.paired_diff_mean == 0.0
    too_big = deterministic_rule(h + 0.1)
    with pytest.raises(DominationViolated):
        ito_integrand_compare(
            too_big, h, PayoffFunctional.terminal(ScalarConvexFn.call(0.0)),
            GRID, 1_000, seed=2, direction="upper",
        )


def test_ito_lower_direction():
    cfg = experiment_config("ito_compare", {
        "n_paths": 30_000,
        "params": {"integrand": {"form": "one_plus_abs"}, "direction": "lower"},
    })
    out = run_experiment(cfg, out_dir=None)
    assert out.verdict == DOMINANCE


def test_doleans_lower_needs_bound_guard():
    cfg = experiment_config("doleans_compare", {
        "n_paths": 2_000,
        "params": {"integrand": {"form": "one_plus_abs"}, "direction": "lower"},
    })
    with pytest.raises(HypothesisUnverifiable):
        run_experiment(cfg, out_dir=None)
    # bounded coefficient form passes the guard: H = 0.3 + 0.2 sigmoid >= h = 0.3
    ok = experiment_config("doleans_compare", {
        "n_paths": 30_000,
        "params": {
            "integrand": {"form": "coefficient", "coefficient":
                          {"kind": "sigmoid", "c": 0.2, "center": 0.0, "scale": 1.0}},
            "h": 0.0, "direction": "lower",
        },
    })
    out = run_experiment(ok, out_dir=None)
    assert out.verdict == DOMINANCE


def test_cm_compare_trivial_cases():
    f = CoefficientFn.sigmoid(0.4)
    res = completely_monotone_compare(f, f, [(1.0, 0.0), (1.0, 1.0)], GRID, 10_000, seed=4)
    lam0 = [r for r in res["per_lambda"] if r["lambda"] == 0.0][0]
    assert lam0["estimate_lhs"] == 1.0 and lam0["estimate_rhs"] == 1.0
    for row in res["per_lambda"]:
        assert row["paired_diff_mean"] == 0.0  # f == g under CRN
    assert res["verdict"] == DOMINANCE


def test_cm_compare_hypothesis_guard():
    f = CoefficientFn.sigmoid(0.8)
    g = CoefficientFn.sigmoid(0.4)
    with pytest.raises(HypothesisUnverifiable):
        completely_monotone_compare(f, g, [(1.0, 0.5)], GRID, 1_000, seed=4)  # f > g


def test_cm_compare_cross_checks_exact_recursion():
    # the discretized integral sum f(t_k, W_k) dW is the discrete chain of
    # Prop-style recursions with f_k(x) = sqrt(dt) f(t_k, sqrt(dt) x)
    grid = GridSpec(8, 1.0)
    f = CoefficientFn.sigmoid(0.4)
    g = CoefficientFn.sigmoid(0.8)
    lam = 1.0
    res = completely_monotone_compare(f, g, [(1.0, lam)], grid, 200_000, seed=12)
    sdt = math.sqrt(grid.dt)
    fks = [lambda x, t=k * grid.dt: sdt * f(t, sdt * x) for k in range(grid.n)]
    gks = [lambda x, t=k * grid.dt: sdt * g(t, sdt * x) for k in range(grid.n)]
    comp = compare_laplace(fks, gks, [lam])
    row = res["per_lambda"][0]
    assert abs(row["estimate_lhs"] - comp.rows[0].value_lo) <= 3 * row["se_lhs"]
    assert abs(row["estimate_rhs"] - comp.rows[0].value_hi) <= 3 * row["se_rhs"]
    assert comp.rows[0].dominates


def test_counterexample_guards():
    with pytest.raises(ParamOutOfRange):
        counterexample_two_period(c=0.25, x0=0.0)
    with pytest.raises(HypothesisUnverifiable):
        counterexample_integrand((0.05, 1.9), 1_000, seed=1)  # sigma_tilde > sigma0
    with pytest.raises(HypothesisUnverifiable):
        counterexample_integrand((0.05, 0.15), 1_000, seed=1, v=lambda x: np.asarray(x) * 0.1)
    with pytest.raises(HypothesisUnverifiable):
        counterexample_integrand((0.05, 0.15), 1_000, seed=1, v=lambda x: np.full(np.shape(x), 0.3))


def test_counterexample_integrand_constant_v_no_reversal():
    # v constant: E e^{sigma Z + c} = e^{c + sigma^2/2} is increasing in sigma,
    # so the quadrature curve has no decreasing segment at all.
    with pytest.raises(HypothesisUnverifiable):
        counterexample_integrand((0.05, 0.15), 1_000, seed=1, v=lambda x: np.full(np.shape(x), 0.3))


# -- config ------------------------------------------------------------------


def test_config_validation_paths():
    with pytest.raises(ConfigError) as err:
        validate_config({"experiment": "not_a_thing"})
    assert "experiment" in str(err.value)
    with pytest.raises(ConfigError):
        validate_config({"experiment": "sandwich", "params": {"s0": 100.0}})  # missing sigma
    with pytest.raises(ConfigError):
        validate_config({"experiment": "sandwich", "n_paths": 0, "params": {
            "s0": 100.0, "sigma": {"kind": "constant", "value": 0.2},
            "payoff": {"kind": "terminal", "f": {"call": 100.0}}}})
    cfg = validate_config(default_config("sandwich"))
    assert cfg["z"] == 3.0 and cfg["threads"] == 1


def test_innovation_config_roundtrip():
    docs = [
        {"kind": "gaussian", "variance": 1.0},
        {"kind": "finite_support", "points": [-1.0, 1.0], "probs": [0.5, 0.5]},
        {"kind": "levy", "a": 0.5, "intensity": 2.0, "jump": {"two_point": [-0.3, 0.3, 0.5]}, "dt": 0.5},
    ]
    for doc in docs:
        spec = parse_innovation(doc)
        again = parse_innovation(innovation_to_config(spec))
        assert again == spec


def test_merge_config_deep():
    base = {"a": {"b": 1, "c": 2}, "d": 3}
    out = merge_config(base, {"a": {"c": 9}})
    assert out == {"a": {"b": 1, "c": 9}, "d": 3}
    assert base["a"]["c"] == 2  # no mutation


# -- run_experiment / CLI -------------------------------------------------------


def test_run_experiment_writes_files_and_is_deterministic(tmp_path):
    cfg = experiment_config("counterexample_2period")
    out1 = run_experiment(cfg, out_dir=str(tmp_path / "a"), plot=False)
    out2 = run_experiment(cfg, out_dir=str(tmp_path / "b"), plot=False)
    j1 = (tmp_path / "a" / "counterexample_2period_report.json").read_bytes()
    j2 = (tmp_path / "b" / "counterexample_2period_report.json").read_bytes()
    assert j1 == j2
    doc = json.loads(j1)
    assert doc["report_version"] == 1
    assert (tmp_path / "a" / "counterexample_2period_curve.csv").exists()
    assert out1.exit_code == 0 and out2.exit_code == 0


def test_run_experiment_renders_figures(tmp_path):
    cfg = experiment_config("counterexample_2period")
    run_experiment(cfg, out_dir=str(tmp_path), plot=True)
    assert (tmp_path / "counterexample_2period.png").stat().st_size > 0


def test_negative_control_digital_payoff():
    # digital (non-convex) payoff under the criterion-1 models: the ATM digital
    # value decreases in volatility, so a violation fires; declaring it the
    # expected outcome makes the harness report expected-negative (exit 0).
    cfg = experiment_config("compare_european", {
        "n_paths": 50_000,
        "expected": "violation_detected",
        "params": {"payoff": {"kind": "digital", "strike": 100.0}},
    })
    out = run_experiment(cfg, out_dir=None)
    assert out.verdict == VIOLATION
    assert out.outcome == "as_expected" and out.exit_code == 0
    assert out.report["comparison"]["extra"]["payoff_convex"] is False


def test_exit_code_on_unexpected_violation():
    cfg = experiment_config("compare_european", {
        "n_paths": 20_000,
        "params": {
            "model_lo": {"type": "local_vol", "s0": 100.0, "sigma": {"kind": "constant", "value": 0.3}},
            "model_hi": {"type": "local_vol", "s0": 100.0, "sigma": {"kind": "constant", "value": 0.1}},
        },
    })
    out = run_experiment(cfg, out_dir=None)
    assert out.verdict == VIOLATION and out.exit_code == 2


def test_levy_crn_requires_same_driver():
    cfg = experiment_config("compare_european", {
        "n_paths": 1_000,
        "params": {
            "model_lo": {"type": "levy", "x0": 0.0, "kappa": {"kind": "constant", "value": 0.5},
                          "levy": {"a": 0.5, "intensity": 2.0, "jump": {"two_point": [-0.3, 0.3, 0.5]}}},
            "model_hi": {"type": "local_vol", "s0": 100.0, "sigma": {"kind": "constant", "value": 0.1}},
        },
    })
    with pytest.raises(ConfigError):
        run_experiment(cfg, out_dir=None)


def test_levy_pair_comparison_runs():
    levy = {"a": 0.5, "intensity": 2.0, "jump": {"two_point": [-0.3, 0.3, 0.5]}}
    cfg = experiment_config("compare_european", {
        "n_paths": 30_000,
        "grid": {"n": 32, "T": 1.0},
        "params": {
            "model_lo": {"type": "levy", "x0": 0.0, "kappa": {"kind": "constant", "value": 0.5}, "levy": levy},
            "model_hi": {"type": "levy", "x0": 0.0, "kappa": {"kind": "constant", "value": 0.9}, "levy": levy},
            "payoff": {"kind": "terminal", "f": {"call": 0.0}},
        },
    })
    out = run_experiment(cfg, out_dir=None)
    assert out.verdict == DOMINANCE


def test_cli_end_to_end(tmp_path, capsys):
    out_dir = str(tmp_path / "cli")
    code = cli_main(["counterexample-2period", "--out", out_dir, "--no-plot"])
    assert code == 0
    assert os.path.exists(os.path.join(out_dir, "counterexample_2period_report.json"))
    captured = capsys.readouterr()
    assert "as_expected" in captured.out


def test_cli_config_override(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"params": {"c": 0.75}}))
    out_dir = str(tmp_path / "cli2")
    code = cli_main([
        "counterexample-2period", "--config", str(cfg_file), "--out", out_dir, "--no-plot",
    ])
    assert code == 0
    doc = json.loads((tmp_path / "cli2" / "counterexample_2period_report.json").read_text())
    assert doc["config"]["params"]["c"] == 0.75


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg_file = tmp_path / "bad.json"
    cfg_file.write_text("{not json")
    code = cli_main(["sandwich", "--config", str(cfg_file), "--out", str(tmp_path)])
    assert code == 2
    assert "ConfigError" in capsys.readouterr().err


def test_make_report_inconclusive_on_degenerate_input():
    rep = make_report("x", np.array([1.0]), np.array([2.0]), seed=0)
    assert rep.verdict == "inconclusive"
    rep = make_report("x", np.array([np.nan, 1.0]), np.array([1.0, 1.0]), seed=0)
    assert rep.verdict == "inconclusive"
