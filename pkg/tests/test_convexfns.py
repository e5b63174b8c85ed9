"""Scalar convex functions, value functions, state grids."""

import math

import numpy as np
import pytest

from cvxorder.convexfns import ScalarConvexFn, bachelier_call, lognormal_call, norm_cdf
from cvxorder.valuefn import ValueFunction, interp_chord, make_state_grid


def test_pl_basics():
    call = ScalarConvexFn.call(2.0)
    assert call(1.0) == 0.0 and call(5.0) == 3.0
    put = ScalarConvexFn.put(2.0)
    assert put(1.0) == 1.0 and put(5.0) == 0.0
    ab = ScalarConvexFn.abs()
    np.testing.assert_allclose(ab(np.array([-3.0, 0.0, 4.0])), [3.0, 0.0, 4.0])
    assert ScalarConvexFn.identity()(7.5) == 7.5


def test_pl_monotone_and_minimum():
    assert ScalarConvexFn.call(1.0).monotone == "nondecreasing"
    assert ScalarConvexFn.put(1.0).monotone == "nonincreasing"
    assert ScalarConvexFn.abs().monotone is None
    assert ScalarConvexFn.call(1.0).minimum() == 0.0
    assert ScalarConvexFn.put(1.0).minimum() == 0.0
    assert ScalarConvexFn.identity().minimum() == -math.inf
    assert ScalarConvexFn.piecewise_linear(const=2.5).minimum() == 2.5


def test_pl_rejects_negative_kink_coefficients():
    with pytest.raises(ValueError):
        ScalarConvexFn.piecewise_linear(knots=[0.0], coefs=[-1.0])


def test_from_table_roundtrip():
    xs = np.linspace(-2, 2, 9)
    target = ScalarConvexFn.piecewise_linear(const=0.3, slope=-0.5, knots=[-1.0, 0.5], coefs=[0.75, 1.0])
    fitted = ScalarConvexFn.from_table(xs, target(xs))
    probe = np.linspace(-5, 5, 101)
    np.testing.assert_allclose(fitted(probe), target(probe), atol=1e-12)
    with pytest.raises(ValueError):
        ScalarConvexFn.from_table([0, 1, 2], [0.0, 1.0, 1.5])  # concave samples


def test_custom_convexity_probe():
    ScalarConvexFn.custom(lambda x: np.cosh(x), growth_r=1.0)  # convex: fine
    with pytest.raises(ValueError):
        ScalarConvexFn.custom(lambda x: -np.abs(x), growth_r=1.0)


def test_bachelier_and_lognormal_oracles():
    # Bachelier against brute-force quadrature on a fine grid
    zs = np.linspace(-10, 10, 200_001)
    pdf = np.exp(-0.5 * zs**2) / math.sqrt(2 * math.pi)
    mean, std, k = 0.3, 1.7, 0.9
    brute = np.trapezoid(np.maximum(mean + std * zs - k, 0.0) * pdf, zs)
    assert abs(bachelier_call(mean, std, k) - brute) < 5e-9  # oracle's own h^2 error
    # lognormal call against the same brute force
    x, sig = 1.2, 0.45
    brute = np.trapezoid(np.maximum(x * np.exp(sig * zs - 0.5 * sig**2) - k, 0.0) * pdf, zs)
    assert abs(lognormal_call(x, k, sig) - brute) < 1e-9
    assert lognormal_call(2.0, -1.0, 0.3) == 3.0  # negative strike: E S - k


def test_value_function_interpolation_and_extrapolation():
    grid = np.array([0.0, 1.0, 2.0, 4.0])
    vals = np.array([1.0, 0.0, 1.0, 5.0])
    vf = ValueFunction(grid, vals)
    assert vf(1.0) == 0.0 and vf(2.0) == 1.0  # exact at nodes
    assert vf(3.0) == 3.0  # interior chord
    assert vf(-1.0) == 2.0  # left chord slope -1
    assert vf(5.0) == 7.0  # right chord slope 2
    assert vf.is_convex()
    bad = ValueFunction(grid, np.array([0.0, 2.0, 1.0, 5.0]))
    assert not bad.is_convex()


def test_value_function_validation():
    with pytest.raises(ValueError):
        ValueFunction(np.array([0.0, 0.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        ValueFunction(np.array([0.0, 1.0]), np.zeros(3))


def test_value_function_csv(tmp_path):
    vf = ValueFunction(np.array([0.0, 1.0]), np.array([2.0, 3.0]))
    path = tmp_path / "vf.csv"
    vf.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "grid,value"
    assert len(lines) == 3


def test_make_state_grid_contains_center_and_extras():
    g = make_state_grid(100.0, 50.0, points=257, extra=(95.0, 130.0, 1e9))
    assert np.all(np.diff(g) > 0)
    for point in (100.0, 95.0, 130.0):
        assert np.min(np.abs(g - point)) == 0.0
    assert g[0] >= 100.0 - 50.0 - 1e-9 and g[-1] <= 100.0 + 50.0 + 1e-9
    assert 1e9 not in g  # out-of-span extras dropped


def test_interp_chord_matches_valuefunction():
    grid = np.sort(np.random.default_rng(0).uniform(-2, 2, 17))
    vals = np.cosh(grid)
    q = np.linspace(-4, 4, 301)
    vf = ValueFunction(grid, vals)
    np.testing.assert_allclose(interp_chord(grid, vals, q), vf(q), atol=0)
