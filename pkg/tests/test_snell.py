"""Snell envelopes, reduite comparisons, refinement studies."""

import math

import numpy as np
import pytest

from cvxorder._induction import grid_induction
from cvxorder.coeffs import CoefficientFn, StepFn
from cvxorder.convexfns import ScalarConvexFn
from cvxorder.errors import BackendUnavailable
from cvxorder.noise import InnovationSpec, quantize_gaussian
from cvxorder.payoffs import BermudanPayoff, PayoffFunctional
from cvxorder.snell import (
    LatticeModel,
    compare_bermudan,
    exhaustive_tree_reduite,
    refine_study,
    snell_bdpp,
)

RADEMACHER = InnovationSpec.rademacher()


def _american_put(strike: float, n: int, rho: float = 0.25) -> BermudanPayoff:
    """Put obstacle with decreasing date scales: early exercise genuinely pays."""
    scales = tuple(math.exp(rho * (n - k) / n) for k in range(n + 1))
    return BermudanPayoff(PayoffFunctional.terminal(ScalarConvexFn.put(strike)), date_scales=scales)


def test_one_period_rademacher_put():
    # 2-leaf tree oracle: X_1 in {0, 2}; continuation = .5 (1-0)_+ + .5 (1-2)_+ = .5
    pay = BermudanPayoff(PayoffFunctional.terminal(ScalarConvexFn.put(1.0)))
    got = exhaustive_tree_reduite([StepFn.constant(1.0)], [RADEMACHER], pay, 1.0)
    assert got == 0.5
    res = snell_bdpp([StepFn.constant(1.0)], [RADEMACHER], pay, 1.0, backend="tree")
    assert res.reduite_u0 == 0.5


def test_constant_obstacle_reduite_is_constant():
    pay = BermudanPayoff(PayoffFunctional.terminal(ScalarConvexFn.piecewise_linear(const=3.0)))
    steps = [StepFn.constant(0.7)] * 3
    specs = [RADEMACHER] * 3
    assert exhaustive_tree_reduite(steps, specs, pay, 0.0) == 3.0
    res = snell_bdpp(steps, specs, pay, 0.0, backend="grid", grid_points=65)
    assert abs(res.reduite_u0 - 3.0) < 1e-12


def test_last_date_only_equals_european_value():
    n = 6
    steps = [StepFn.constant(0.5)] * n
    specs = [quantize_gaussian(6)] * n
    functional = PayoffFunctional.terminal(ScalarConvexFn.call(0.4))
    pay = BermudanPayoff(functional).european_only(n)
    res = snell_bdpp(steps, specs, pay, 0.0, backend="grid", grid_points=257)
    euro = grid_induction(steps, specs, functional, 0.0, grid_points=257)
    assert abs(res.reduite_u0 - euro.value0) < 1e-12


def test_envelope_invariants_on_grid():
    n = 5
    steps = [StepFn.constant(0.6)] * n
    specs = [quantize_gaussian(8)] * n
    pay = _american_put(0.5, n)
    res = snell_bdpp(steps, specs, pay, 0.4, backend="grid", grid_points=257)
    xs = res.xgrid
    conts = res.diagnostics["continuations"]
    obss = res.diagnostics["obstacles"]
    for k in range(n):
        u_k = res.value_functions[k].values
        np.testing.assert_array_less(obss[k] - 1e-12, u_k + 1e-15)  # u_k >= F_k
        np.testing.assert_array_less(conts[k] - 1e-10, u_k + 1e-15)  # supermartingale
    # u_n = F_n exactly
    terminal = pay.obstacle_from_state(n, n, xs)
    np.testing.assert_allclose(res.value_functions[n].values, terminal, atol=1e-15)
    # convexity propagation
    for vf in res.value_functions:
        assert vf.convexity_defect() >= -1e-10
    # tie-break: exercise marked wherever obstacle matches continuation
    for k in range(n):
        np.testing.assert_array_equal(res.exercise_regions[k], obss[k] >= conts[k] - 1e-12)


def test_more_exercise_rights_never_hurt():
    n = 4
    steps = [StepFn.constant(0.8)] * n
    specs = [quantize_gaussian(5)] * n
    full = _american_put(0.6, n)
    half = BermudanPayoff(
        full.functional,
        exercisable=tuple(k % 2 == 0 or k == n for k in range(n + 1)),
        date_scales=full.date_scales,
    )
    v_full = snell_bdpp(steps, specs, full, 0.3, backend="grid", grid_points=257).reduite_u0
    v_half = snell_bdpp(steps, specs, half, 0.3, backend="grid", grid_points=257).reduite_u0
    v_euro = snell_bdpp(steps, specs, full.european_only(n), 0.3, backend="grid", grid_points=257).reduite_u0
    assert v_full >= v_half - 1e-12 >= v_euro - 2e-12


def test_exact_pl_agrees_with_tree():
    rng = np.random.default_rng(11)
    for _ in range(8):
        n = int(rng.integers(1, 5))
        atoms = int(rng.integers(2, 6))
        spec = quantize_gaussian(atoms).scaled(float(rng.uniform(0.3, 1.0)))
        steps = [StepFn.constant(float(rng.uniform(0.2, 1.2))) for _ in range(n)]
        strike = float(rng.uniform(-0.5, 0.5))
        scales = tuple(math.exp(0.3 * (n - k) / n) for k in range(n + 1))
        pay = BermudanPayoff(PayoffFunctional.terminal(ScalarConvexFn.put(strike)), date_scales=scales)
        x0 = float(rng.normal())
        tree = exhaustive_tree_reduite(steps, [spec] * n, pay, x0)
        pl = snell_bdpp(steps, [spec] * n, pay, x0, backend="exact_pl")
        assert abs(pl.reduite_u0 - tree) < 1e-9


def test_grid_bdpp_close_to_tree_within_budget():
    n = 3
    spec = quantize_gaussian(5).scaled(0.6)
    steps = [StepFn.constant(1.0)] * n
    pay = _american_put(0.5, n)
    tree = exhaustive_tree_reduite(steps, [spec] * n, pay, 0.3)
    res = snell_bdpp(steps, [spec] * n, pay, 0.3, backend="grid", grid_points=1025,
                     extra_grid_points=(0.5,))
    assert abs(res.reduite_u0 - tree) <= res.diagnostics["budget"] + 1e-9


def test_tree_backend_guards():
    pay = BermudanPayoff(PayoffFunctional.terminal(ScalarConvexFn.call(0.0)))
    with pytest.raises(BackendUnavailable):
        snell_bdpp([StepFn.constant(1.0)] * 5, [RADEMACHER] * 5, pay, 0.0, backend="tree")
    with pytest.raises(BackendUnavailable):
        snell_bdpp([StepFn.constant(1.0)], [InnovationSpec.gaussian(1.0)], pay, 0.0, backend="tree")


def test_compare_bermudan_ordering_and_equality():
    n = 6
    specs = [quantize_gaussian(8)] * n
    lo = [StepFn.constant(0.4)] * n
    hi = [StepFn.constant(0.7)] * n
    pay = _american_put(0.5, n)
    comp = compare_bermudan(lo, hi, specs, pay, 0.2, grid_points=257)
    assert comp.dominance and comp.u0 <= comp.v0 + comp.tolerance
    same = compare_bermudan(lo, lo, specs, pay, 0.2, grid_points=257)
    assert abs(same.u0 - same.v0) < 1e-14


def test_exercise_boundary_export(tmp_path):
    n = 5
    steps = [StepFn.constant(0.5)] * n
    specs = [quantize_gaussian(8)] * n
    res = snell_bdpp(steps, specs, _american_put(0.5, n), 0.4, backend="grid", grid_points=129)
    rows = res.exercise_boundary_rows()
    assert rows and all(isinstance(k, int) for k, _ in rows)
    out = tmp_path / "boundary.csv"
    res.boundary_to_csv(out)
    assert out.read_text().startswith("k,boundary_x")


def test_refine_study_structure():
    model = LatticeModel(CoefficientFn.local_vol_wrap(CoefficientFn.constant(0.2)), 1.0, 16)
    pay = BermudanPayoff(PayoffFunctional.terminal(ScalarConvexFn.put(100.0)))
    rows = refine_study(model, pay, 100.0, [4, 8, 16], grid_points=257, extra_grid_points=(100.0,))
    assert [r.n for r in rows] == [4, 8, 16]
    assert rows[0].diff_from_previous is None
    assert all(r.diff_from_previous >= 0 for r in rows[1:])
    # a degenerate lattice (sigma = 0) prices the obstacle deterministically
    flat = LatticeModel(CoefficientFn.constant(0.0), 1.0, 4)
    rows = refine_study(flat, pay, 90.0, [2, 4], grid_points=65)
    assert all(abs(r.reduite - 10.0) < 1e-12 for r in rows)
