"""Innovation-law construction, sampling and quantization."""

import math

import numpy as np
import pytest

from cvxorder.errors import NotFiniteSupport
from cvxorder.noise import (
    InnovationSpec,
    JumpLaw,
    LevySpec,
    enumerate_support,
    innovation_matrix,
    levy_increment_matrix,
    quantize_gaussian,
    quantize_levy_increment,
    sample_innovation,
    sample_levy_increment,
)
from cvxorder.rng import RngStream, gaussian_matrix

HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)


def test_finite_support_invariants_enforced():
    spec = InnovationSpec.finite_support([-2.0, 0.0, 2.0], [0.25, 0.5, 0.25])
    x, p = spec.atoms()
    assert abs(float(np.dot(x, p))) <= 1e-14
    assert abs(float(p.sum()) - 1.0) <= 1e-14
    assert spec.symmetric
    with pytest.raises(ValueError):
        InnovationSpec.finite_support([-1.0, 1.0], [0.4, 0.5])  # probs sum != 1
    with pytest.raises(ValueError):
        InnovationSpec.finite_support([-1.0, 2.0], [0.5, 0.5])  # mean != 0
    with pytest.raises(ValueError):
        InnovationSpec.finite_support([-1.5, -1.5, 3.0], [0.4, 0.4, 0.2])  # dup points


def test_symmetry_is_derived_not_declared():
    asym = InnovationSpec.finite_support([-2.0, 1.0], [1.0 / 3.0, 2.0 / 3.0])
    x, p = asym.atoms()
    assert abs(float(np.dot(x, p))) <= 1e-14  # centered by construction
    assert not asym.symmetric
    assert InnovationSpec.rademacher().symmetric
    assert InnovationSpec.gaussian(2.0).symmetric


def test_gaussian_requires_positive_variance():
    with pytest.raises(ValueError):
        InnovationSpec.gaussian(0.0)


def test_enumerate_support():
    assert enumerate_support(InnovationSpec.rademacher()) == [(-1.0, 0.5), (1.0, 0.5)]
    three = enumerate_support(InnovationSpec.finite_support([2.0, -2.0, 0.0], [0.25, 0.25, 0.5]))
    assert three == [(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)]
    with pytest.raises(NotFiniteSupport):
        enumerate_support(InnovationSpec.gaussian(1.0))


def test_quantize_gaussian_two_points_closed_form():
    spec = quantize_gaussian(2)
    x, p = spec.atoms()
    np.testing.assert_allclose(x, [-1.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4, 8, 16, 31])
def test_quantize_gaussian_moment_matching(n):
    x, p = quantize_gaussian(n).atoms()
    assert abs(float(np.dot(x, p))) <= 1e-12
    assert abs(float(np.dot(x**2, p)) - 1.0) <= 1e-12
    if n >= 4:
        # Gauss-Hermite integrates polynomials up to degree 2n-1 exactly
        assert abs(float(np.dot(x**4, p)) - 3.0) <= 1e-10


def test_quantize_gaussian_abs_moment_error_decays():
    # Oracle: E|Z| = sqrt(2/pi) for the standard normal (half-normal mean).
    # Gauss-Hermite quantization converges slowly for the kinked |x|; the
    # n = 8 error is ~4.3e-2, frozen here from the closed-form oracle.
    err8 = abs(float(np.dot(np.abs(quantize_gaussian(8).atoms()[0]), quantize_gaussian(8).atoms()[1])) - HALF_NORMAL_MEAN)
    err32 = abs(float(np.dot(np.abs(quantize_gaussian(32).atoms()[0]), quantize_gaussian(32).atoms()[1])) - HALF_NORMAL_MEAN)
    assert 0.03 < err8 < 0.05
    assert err32 < err8 / 2


def test_sample_innovation_support_and_determinism():
    spec = InnovationSpec.rademacher()
    s1 = RngStream(11, 5)
    s2 = RngStream(11, 5)
    draws1 = [sample_innovation(spec, s1) for _ in range(32)]
    draws2 = [sample_innovation(spec, s2) for _ in range(32)]
    assert draws1 == draws2
    assert set(draws1) <= {-1.0, 1.0}
    other = [sample_innovation(spec, RngStream(11, 6)) for _ in range(32)]
    assert other != draws1


def test_gaussian_sample_mean_lln():
    spec = InnovationSpec.gaussian(1.0)
    draws = spec.sample_array(RngStream(123, 0), 1_000_000)
    assert abs(float(draws.mean())) <= 4.0 / math.sqrt(1_000_000)


def test_levy_increment_degenerate_cases():
    brown = LevySpec(brownian_coeff_a=1.0, cp_intensity=0.0)
    d = sample_levy_increment(brown, 1.0, RngStream(3, 0))
    ref = float(RngStream(3, 0).gen.standard_normal(1)[0])
    assert d == ref  # pure Brownian: one standard normal draw
    null = LevySpec(brownian_coeff_a=0.0, cp_intensity=0.0)
    assert sample_levy_increment(null, 0.5, RngStream(3, 0)) == 0.0


def test_levy_increment_centered_statistically():
    levy = LevySpec(
        brownian_coeff_a=0.5, cp_intensity=2.0, jump_law=JumpLaw.two_point(-0.3, 0.3, 0.5)
    )
    dt = 0.25
    draws = levy_increment_matrix(levy, dt, seed=77, n_paths=1_000_000, n_steps=1).ravel()
    sd = float(draws.std(ddof=1))
    assert abs(float(draws.mean())) <= 4.0 * sd / math.sqrt(draws.size)
    # increment variance oracle: a^2 dt + intensity dt E[J^2]
    want = levy.increment_variance(dt)
    assert abs(sd**2 - want) <= 5.0 * want / math.sqrt(draws.size) * 3


def test_levy_spec_validation():
    with pytest.raises(ValueError):
        LevySpec(brownian_coeff_a=-0.1)
    with pytest.raises(ValueError):
        LevySpec(cp_intensity=1.0)  # jumps without a law
    with pytest.raises(ValueError):
        LevySpec(compensated=False)
    with pytest.raises(ValueError):
        LevySpec(brownian_coeff_a=1.0, p_moment=1.5)


def test_quantized_levy_increment_matches_moments():
    levy = LevySpec(
        brownian_coeff_a=0.5, cp_intensity=2.0, jump_law=JumpLaw.two_point(-0.3, 0.3, 0.5)
    )
    dt = 1.0 / 8.0
    spec = quantize_levy_increment(levy, dt, n_gauss=8, max_jumps=8)
    x, p = spec.atoms()
    assert abs(float(np.dot(x, p))) <= 1e-14
    assert abs(spec.var() - levy.increment_variance(dt)) <= 1e-6
    assert spec.symmetric  # symmetric jump law + Gaussian part


def test_block_matrices_are_thread_invariant():
    a = gaussian_matrix(5, 70_000, 4, threads=1)
    b = gaussian_matrix(5, 70_000, 4, threads=4)
    assert np.array_equal(a, b)
    specs = [InnovationSpec.rademacher(), InnovationSpec.gaussian(1.0)]
    m1 = innovation_matrix(specs, 9, 40_000, threads=1)
    m2 = innovation_matrix(specs, 9, 40_000, threads=3)
    assert np.array_equal(m1, m2)
    assert set(np.unique(m1[:, 0])) <= {-1.0, 1.0}


def test_scaled_spec_keeps_atoms_exact():
    spec = quantize_gaussian(5).scaled(0.25)
    x, p = spec.atoms()
    assert abs(float(np.dot(x**2, p)) - 0.0625) <= 1e-14
    g = InnovationSpec.gaussian(1.0).scaled(3.0)
    assert g.variance == 9.0
