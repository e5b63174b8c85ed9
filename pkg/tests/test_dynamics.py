"""Simulators: discrete recursions, Euler schemes, integrals, interpolation, I/O."""

import math

import numpy as np
import pytest

from cvxorder.blackscholes import bs_call
from cvxorder.coeffs import CoefficientFn, StepFn
from cvxorder.dynamics import (
    GridSpec,
    Path,
    deterministic_rule,
    discrete_stoch_integral,
    doleans_batch,
    doleans_discrete,
    driver_rule,
    euler_brownian,
    euler_brownian_batch,
    euler_levy,
    euler_levy_batch,
    interpolate_in,
    local_vol_batch,
    read_path_batch,
    simulate_discrete,
    simulate_local_vol,
    stoch_integral_batch,
    write_path_batch,
)
from cvxorder.errors import OutOfRange
from cvxorder.noise import InnovationSpec, JumpLaw, LevySpec, levy_increment_matrix
from cvxorder.rng import RngStream, gaussian_matrix

LEVY = LevySpec(brownian_coeff_a=0.5, cp_intensity=2.0, jump_law=JumpLaw.two_point(-0.3, 0.3, 0.5))


def test_grid_and_path_validation():
    g = GridSpec(4, 2.0)
    assert g.dt == 0.5
    np.testing.assert_allclose(g.times, [0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(ValueError):
        GridSpec(0, 1.0)
    with pytest.raises(ValueError):
        Path(g, np.zeros(4))


def test_interpolate_in():
    path = Path(GridSpec(2, 1.0), np.array([1.0, 3.0, 2.0]))
    assert interpolate_in(path, 0.0) == 1.0
    assert interpolate_in(path, 0.5) == 3.0  # node value exact
    assert interpolate_in(path, 0.25) == 2.0  # midpoint average
    assert interpolate_in(path, 0.75) == 2.5
    with pytest.raises(OutOfRange):
        interpolate_in(path, 1.5)
    ts = np.linspace(0, 1, 501)
    vals = interpolate_in(path, ts)
    assert np.max(np.abs(vals)) <= np.max(np.abs(path.values)) + 1e-15


def test_interpolator_is_sup_norm_contraction():
    grid = GridSpec(8, 1.0)
    rng = np.random.default_rng(0)
    a = rng.normal(size=9)
    b = rng.normal(size=9)
    ts = np.linspace(0, 1, 801)
    ia = interpolate_in(Path(grid, a), ts)
    ib = interpolate_in(Path(grid, b), ts)
    assert np.max(np.abs(ia - ib)) <= np.max(np.abs(a - b)) + 1e-15


def test_simulate_discrete_degenerate():
    zero = [StepFn.constant(0.0)] * 3
    specs = [InnovationSpec.rademacher()] * 3
    path = simulate_discrete(zero, specs, 2.5, RngStream(0, 0))
    np.testing.assert_array_equal(path.values, 2.5)
    one = simulate_discrete([StepFn.constant(1.0)], [InnovationSpec.rademacher()], 0.0, RngStream(0, 1))
    assert one.values[1] in (-1.0, 1.0)


def test_simulate_discrete_martingale():
    steps = [StepFn.from_callable(lambda x: 0.3 * (1 + np.abs(x)), convex=True, nonneg=True)] * 8
    specs = [InnovationSpec.gaussian(1.0)] * 8
    from cvxorder.noise import innovation_matrix
    from cvxorder.dynamics import simulate_discrete_batch

    z = innovation_matrix(specs, 31, 100_000)
    vals = simulate_discrete_batch(steps, z, 1.0)
    term = vals[:, -1]
    sd = term.std(ddof=1)
    assert abs(term.mean() - 1.0) <= 4.0 * sd / math.sqrt(term.size)


def test_euler_brownian_zero_sigma_and_determinism():
    grid = GridSpec(16, 1.0)
    path = euler_brownian(CoefficientFn.constant(0.0), grid, 3.0, RngStream(1, 0))
    np.testing.assert_array_equal(path.values, 3.0)
    a = euler_brownian(CoefficientFn.constant(0.5), grid, 3.0, RngStream(1, 5))
    b = euler_brownian(CoefficientFn.constant(0.5), grid, 3.0, RngStream(1, 5))
    np.testing.assert_array_equal(a.values, b.values)


def test_euler_geometric_converges_to_black_scholes():
    # MC call price under the Euler scheme of dS = 0.2 S dW approaches the
    # Black-Scholes oracle as n grows; allow 3 se plus an O(1/n) bias budget.
    s0 = strike = 100.0
    truth = bs_call(s0, strike, 1.0, 0.2)
    sigma = CoefficientFn.local_vol_wrap(CoefficientFn.constant(0.2))
    errs = []
    for n in (8, 32, 128):
        grid = GridSpec(n, 1.0)
        z = gaussian_matrix(99, 100_000, n)
        vals = euler_brownian_batch(sigma, grid, s0, z)
        payoff = np.maximum(vals[:, -1] - strike, 0.0)
        se = payoff.std(ddof=1) / math.sqrt(payoff.size)
        err = abs(payoff.mean() - truth)
        errs.append(err)
        assert err <= 3 * se + s0 * 0.04 / n
    assert errs[-1] <= errs[0] + 0.1  # no blow-up as the grid refines


def test_euler_levy_degenerate_and_identity():
    grid = GridSpec(8, 2.0)
    null = LevySpec(brownian_coeff_a=0.0, cp_intensity=0.0)
    path = euler_levy(CoefficientFn.constant(1.0), null, grid, 1.5, RngStream(2, 0))
    np.testing.assert_array_equal(path.values, 1.5)
    inc = levy_increment_matrix(LEVY, grid.dt, 3, 4, grid.n)
    vals = euler_levy_batch(CoefficientFn.constant(1.0), grid, 2.0, inc)
    np.testing.assert_allclose(vals, 2.0 + np.concatenate([np.zeros((4, 1)), np.cumsum(inc, axis=1)], axis=1), atol=1e-14)


def test_euler_levy_martingale():
    grid = GridSpec(32, 1.0)
    inc = levy_increment_matrix(LEVY, grid.dt, 17, 100_000, grid.n)
    kappa = CoefficientFn.from_callable(
        lambda t, x: np.minimum(0.3 * (1 + np.abs(x)), 3.0),
        growth_constant_C=0.3, nonneg=True, bounded=True, bounds=(0.0, 3.0),
    )
    vals = euler_levy_batch(kappa, grid, 1.0, inc)
    term = vals[:, -1]
    assert abs(term.mean() - 1.0) <= 4.0 * term.std(ddof=1) / math.sqrt(term.size)


def test_local_vol_positive_start_and_martingale():
    grid = GridSpec(32, 1.0)
    path = simulate_local_vol(CoefficientFn.constant(0.0), grid, 50.0, RngStream(4, 0))
    np.testing.assert_array_equal(path.values, 50.0)
    z = gaussian_matrix(21, 100_000, grid.n)
    vals, nonpos = local_vol_batch(CoefficientFn.constant(0.2), grid, 100.0, z)
    term = vals[:, -1]
    assert abs(term.mean() - 100.0) <= 4.0 * term.std(ddof=1) / math.sqrt(term.size)
    assert nonpos == 0  # sigma = 0.2, n = 32: zero crossings are ~13-sigma events


def test_discrete_stoch_integral_rules():
    specs = [InnovationSpec.rademacher()] * 4
    zero = discrete_stoch_integral(lambda k, z: 0.0, specs, RngStream(5, 0))
    np.testing.assert_array_equal(zero.values, 0.0)
    ones = discrete_stoch_integral(lambda k, z: 1.0, specs, RngStream(5, 1))
    z = InnovationSpec.rademacher().sample_array(RngStream(5, 1), 4)
    np.testing.assert_allclose(ones.values[1:], np.cumsum(z), atol=1e-15)


def test_stoch_integral_adaptedness_structural():
    # the rule never sees the draw it multiplies: H_k from Z_{1:k} only
    seen = []

    def rule(state):
        seen.append(state.z_hist.shape[1])
        return np.ones(state.driver.shape)

    z = np.ones((3, 5))
    stoch_integral_batch(rule, z)
    assert seen == [0, 1, 2, 3, 4]


def test_stoch_integral_martingale():
    z = math.sqrt(1.0 / 32.0) * gaussian_matrix(8, 100_000, 32)
    rule = driver_rule(lambda t, w: np.abs(np.sin(w)))
    vals, _ = stoch_integral_batch(rule, z, np.linspace(0, 1, 33)[:-1])
    term = vals[:, -1]
    assert abs(term.mean()) <= 4.0 * term.std(ddof=1) / math.sqrt(term.size)


def test_doleans_positive_and_martingale():
    grid = GridSpec(32, 1.0)
    flat = doleans_discrete(lambda k, z: 0.0, grid, RngStream(6, 0))
    np.testing.assert_array_equal(flat.values, 1.0)
    z = gaussian_matrix(12, 100_000, grid.n)
    vals, _ = doleans_batch(driver_rule(lambda t, w: 0.3 * np.abs(np.cos(w))), grid, z)
    assert np.all(vals > 0.0)
    term = vals[:, -1]
    assert abs(term.mean() - 1.0) <= 4.0 * term.std(ddof=1) / math.sqrt(term.size)


def test_crn_bitwise_reproducibility():
    grid = GridSpec(16, 1.0)
    z = gaussian_matrix(33, 1000, grid.n)
    a = euler_brownian_batch(CoefficientFn.constant(0.4), grid, 1.0, z)
    b = euler_brownian_batch(CoefficientFn.constant(0.4), grid, 1.0, z)
    assert np.array_equal(a, b)
    z2 = gaussian_matrix(33, 1000, grid.n)
    assert np.array_equal(z, z2)


def test_sup_norm_moment_stability_across_n():
    kappa = CoefficientFn.from_callable(
        lambda t, x: np.minimum(0.3 * (1 + np.abs(x)), 3.0),
        growth_constant_C=0.3, nonneg=True, bounded=True, bounds=(0.0, 3.0),
    )
    second_moments = {}
    for n in (16, 64):
        grid = GridSpec(n, 1.0)
        inc = levy_increment_matrix(LEVY, grid.dt, 51, 20_000, n)
        vals = euler_levy_batch(kappa, grid, 1.0, inc)
        second_moments[n] = float((np.abs(vals).max(axis=1) ** 2).mean())
    assert second_moments[64] <= 1.5 * second_moments[16]


def test_path_batch_io(tmp_path):
    arr = np.random.default_rng(1).normal(size=(7, 5))
    f = tmp_path / "batch.bin"
    write_path_batch(f, arr)
    back = read_path_batch(f)
    np.testing.assert_array_equal(arr, back)
    with open(f, "r+b") as fh:
        fh.write(b"BADMAGIC")
    with pytest.raises(ValueError):
        read_path_batch(f)


def test_path_csv(tmp_path):
    path = Path(GridSpec(2, 1.0), np.array([1.0, 2.0, 3.0]))
    f = tmp_path / "p.csv"
    path.to_csv(f)
    lines = f.read_text().strip().splitlines()
    assert lines[0] == "t,value" and len(lines) == 4
