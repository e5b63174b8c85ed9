"""Exact expectation operators and backward value recursions.

``q_operator`` is the one-step smoothing E phi(u Z): exact on atomic laws,
closed-form for piecewise-linear integrands against Gaussians (Bachelier
formula) and Gauss-Hermite otherwise.  On top of it sit the two-sided convex
order recursion, the log-space Laplace-transform recursion, and the one-step
geometric (Doleans) operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._induction import grid_induction, reach_half_width, transition_nodes
from .coeffs import CoefficientFn, StepFn
from .convexfns import (
    ScalarConvexFn,
    bachelier_call,
    gaussian_abs_moment,
    hermite_nodes,
    lognormal_call,
)
from .errors import BackendUnavailable, GrowthMismatch, HypothesisUnverifiable, OverflowDetected
from .noise import InnovationSpec
from .payoffs import PayoffFunctional
from .valuefn import interp_chord

_MAX_EXP = math.log(np.finfo(float).max)


def _check_growth(phi: ScalarConvexFn, spec: InnovationSpec) -> None:
    if phi.growth_r > spec.moment_order_p:
        raise GrowthMismatch(
            f"integrand growth r={phi.growth_r} exceeds innovation moment order p={spec.moment_order_p}"
        )


def _expect_gaussian(phi: ScalarConvexFn, mean: float, std: float, quad_nodes: int) -> float:
    """E phi(mean + std N); closed forms where available, Gauss-Hermite otherwise."""
    if std == 0.0:
        return float(phi(mean))
    if phi.kind == "piecewise_linear":
        out = phi.const + phi.slope * mean
        for k, c in zip(phi.knots, phi.coefs):
            out += c * bachelier_call(mean, std, k)
        return float(out)
    if phi.kind == "exp_affine":
        return math.exp(phi.lam * mean + 0.5 * (phi.lam * std) ** 2)
    if phi.kind == "power" and mean == 0.0:
        return std**phi.p * gaussian_abs_moment(phi.p)
    z, w = hermite_nodes(quad_nodes)
    return float(w @ phi(mean + std * z))


def q_operator(
    phi: ScalarConvexFn, spec: InnovationSpec, u: float, quad_nodes: int = 64
) -> float:
    """Q phi(u) = E phi(u Z) for Z distributed by ``spec``."""
    _check_growth(phi, spec)
    if u == 0.0:
        return float(phi(0.0))
    if spec.kind == "finite_support":
        x, p = spec.atoms()
        return float(p @ phi(u * x))
    if spec.kind == "gaussian":
        return _expect_gaussian(phi, 0.0, abs(u) * math.sqrt(spec.variance), quad_nodes)
    raise ValueError("q_operator supports gaussian and finite-support innovations")


def q_drift_operator(
    f: ScalarConvexFn,
    b: CoefficientFn,
    gamma: float,
    t: float,
    spec: InnovationSpec,
    x: float,
    u: float,
    quad_nodes: int = 64,
) -> float:
    """Drifted one-step operator E f(x + gamma b(t, x) + u Z)."""
    _check_growth(f, spec)
    mean = x + gamma * float(b(t, x))
    if u == 0.0:
        return float(f(mean))
    if spec.kind == "finite_support":
        z, p = spec.atoms()
        return float(p @ f(mean + u * z))
    if spec.kind == "gaussian":
        return _expect_gaussian(f, mean, abs(u) * math.sqrt(spec.variance), quad_nodes)
    raise ValueError("q_drift_operator supports gaussian and finite-support innovations")


# -- hypothesis certification ---------------------------------------------------


def certify_hypothesis(
    sigmas: Sequence[StepFn],
    thetas: Sequence[StepFn],
    specs: Sequence[InnovationSpec],
    hypothesis: str = "auto",
    probe: np.ndarray | None = None,
    kappas: Sequence[StepFn] | None = None,
    tol: float = 1e-9,
) -> str:
    """Certify 'partitioning' or 'domination'; raise HypothesisUnverifiable otherwise.

    Partitioning needs 0 <= sigma_k <= theta_k pointwise with all sigma_k (or
    all theta_k, or an explicit kappa wedge) convex.  Domination needs
    |sigma_k| <= theta_k with every theta_k convex and symmetric innovations.
    """
    xs = np.linspace(-100.0, 100.0, 801) if probe is None else np.asarray(probe, dtype=float)
    reasons = []

    def _partitioning() -> bool:
        for k, (s, th) in enumerate(zip(sigmas, thetas)):
            sv, tv = s(xs), th(xs)
            if not s.nonneg or np.min(sv) < -tol:
                reasons.append(f"partitioning: sigma_{k} not certified non-negative")
                return False
            if np.max(sv - tv) > tol:
                reasons.append(f"partitioning: sigma_{k} <= theta_{k} fails on probe")
                return False
        if kappas is not None:
            for k, (s, ka, th) in enumerate(zip(sigmas, kappas, thetas)):
                if not ka.convex:
                    reasons.append(f"partitioning: kappa_{k} not certified convex")
                    return False
                kv = ka(xs)
                if np.max(s(xs) - kv) > tol or np.max(kv - th(xs)) > tol:
                    reasons.append(f"partitioning: sigma_{k} <= kappa_{k} <= theta_{k} fails")
                    return False
            return True
        if all(s.convex for s in sigmas) or all(th.convex for th in thetas):
            return True
        reasons.append("partitioning: neither all sigma_k nor all theta_k certified convex")
        return False

    def _domination() -> bool:
        if not all(spec.symmetric for spec in specs):
            reasons.append("domination: innovations not all symmetric")
            return False
        if not all(th.convex for th in thetas):
            reasons.append("domination: theta_k not all certified convex")
            return False
        for k, (s, th) in enumerate(zip(sigmas, thetas)):
            if np.max(np.abs(s(xs)) - th(xs)) > tol:
                reasons.append(f"domination: |sigma_{k}| <= theta_{k} fails on probe")
                return False
        return True

    if hypothesis in ("partitioning", "auto") and _partitioning():
        return "partitioning"
    if hypothesis in ("domination", "auto") and _domination():
        return "domination"
    raise HypothesisUnverifiable("; ".join(reasons) or f"unknown hypothesis {hypothesis!r}")


# -- exact backends -------------------------------------------------------------


def enumerate_expectation(
    sigmas: Sequence[StepFn],
    specs: Sequence[InnovationSpec],
    payoff: PayoffFunctional,
    x0: float,
) -> float:
    """Forward enumeration oracle: exact E F(X_{0:n}) over all atom paths."""
    paths = np.array([[float(x0)]])
    probs = np.array([1.0])
    for step, spec in zip(sigmas, specs):
        z, p = spec.atoms()
        x = paths[:, -1]
        nxt = x[:, None] + np.asarray(step(x))[:, None] * z[None, :]
        m, a = nxt.shape
        paths = np.concatenate(
            [np.repeat(paths, a, axis=0), nxt.reshape(m * a, 1)], axis=1
        )
        probs = (probs[:, None] * p[None, :]).ravel()
    return float(probs @ payoff.eval_values(paths))


def _recursion_expectation(
    sigmas: Sequence[StepFn],
    specs: Sequence[InnovationSpec],
    payoff: PayoffFunctional,
    x0: float,
) -> float:
    """Backward Q-operator recursion Phi_k = (Q_{k+1} Phi_{k+1}(.., x_k + .))(sigma_k(x_k))."""
    n = len(sigmas)
    atoms = [spec.atoms() for spec in specs]

    def phi_k(prefix: tuple[float, ...]) -> float:
        k = len(prefix) - 1
        if k == n:
            return float(payoff.eval_values(np.array([prefix]))[0])
        u = float(sigmas[k](prefix[-1]))
        z, p = atoms[k]
        return float(sum(pj * phi_k(prefix + (prefix[-1] + u * zj,)) for zj, pj in zip(z, p)))

    return phi_k((float(x0),))


@dataclass
class ConvexOrderResult:
    phi0: float
    psi0: float
    dominance: bool
    tolerance: float
    backend: str
    hypothesis: str
    details: dict = field(default_factory=dict)


def backward_convex_order(
    sigmas: Sequence[StepFn],
    thetas: Sequence[StepFn],
    specs: Sequence[InnovationSpec],
    payoff: PayoffFunctional,
    x0: float,
    hypothesis: str = "auto",
    backend: str = "auto",
    grid_points: int = 513,
    quad_nodes: int = 64,
    extra_grid_points: tuple[float, ...] = (),
    kappas: Sequence[StepFn] | None = None,
) -> ConvexOrderResult:
    """Exact two-sided value recursion Phi_0(x0) vs Psi_0(x0) with verdict.

    Backends: 'enumeration' (n <= 4, atomic innovations, any payoff) or 'grid'
    (state-reducible payoff, any horizon).  'auto' prefers enumeration.
    """
    n = len(sigmas)
    if len(thetas) != n or len(specs) != n:
        raise ValueError("sigmas, thetas and specs must have equal length")

    half = max(
        reach_half_width(sigmas, specs, x0), reach_half_width(thetas, specs, x0)
    )
    probe = np.linspace(x0 - half, x0 + half, 801)
    hyp = certify_hypothesis(sigmas, thetas, specs, hypothesis, probe=probe, kappas=kappas)

    atomic = all(spec.kind == "finite_support" for spec in specs)
    if backend == "auto":
        backend = "enumeration" if (atomic and n <= 4) else "grid"
    if backend == "enumeration":
        if not atomic:
            raise BackendUnavailable("enumeration backend needs finite-support innovations")
        if n > 4:
            raise BackendUnavailable("enumeration backend is limited to n <= 4")
        phi0 = _recursion_expectation(sigmas, specs, payoff, x0)
        psi0 = _recursion_expectation(thetas, specs, payoff, x0)
        tol = 1e-10
        details = {}
    elif backend == "grid":
        if payoff.reduction() is None:
            raise BackendUnavailable(f"payoff kind {payoff.kind!r} is not state-reducible")
        lo = grid_induction(
            sigmas, specs, payoff, x0, grid_points=grid_points, quad_nodes=quad_nodes,
            extra_grid_points=extra_grid_points,
        )
        hi = grid_induction(
            thetas, specs, payoff, x0, grid_points=grid_points, quad_nodes=quad_nodes,
            extra_grid_points=extra_grid_points,
        )
        phi0, psi0 = lo.value0, hi.value0
        tol = lo.budget + hi.budget + 1e-12
        details = {
            "budget_lo": lo.budget,
            "budget_hi": hi.budget,
            "convexity_defect_lo": lo.min_convexity_defect,
            "convexity_defect_hi": hi.min_convexity_defect,
        }
    else:
        raise ValueError(f"unknown backend {backend!r}")

    return ConvexOrderResult(
        phi0=phi0, psi0=psi0, dominance=phi0 <= psi0 + tol, tolerance=tol,
        backend=backend, hypothesis=hyp, details=details,
    )


# -- Laplace-transform recursion -------------------------------------------------


def _as_fn(f) -> Callable[[np.ndarray], np.ndarray]:
    if callable(f):
        return f
    c = float(f)
    return lambda x: np.full(np.shape(x), c)


def _gaussian_hat_kernel(h: float, width_std: float = 8.5) -> np.ndarray:
    """Weights w_j = E hat_j(Z) of the unit-spaced PL hat functions at j*h.

    Integrating a piecewise-linear function sampled on a uniform grid against
    N(0,1) with these weights is exact (up to the < 1e-15 tail mass beyond
    ``width_std``).  They are second differences of k -> E(Z - k)_+, hence
    non-negative by convexity.
    """
    half = int(math.ceil(width_std / h))
    ks = np.arange(-half - 1, half + 2) * h
    bach = np.array([bachelier_call(0.0, 1.0, k) for k in ks])
    w = (bach[:-2] - 2.0 * bach[1:-1] + bach[2:]) / h
    return w / w.sum()


def laplace_recursion_log(
    fks: Sequence, lam: float, quad_nodes: int = 64, grid_points: int = 4097
) -> tuple[float, float]:
    """log E exp(lam X_n) for X_n = sum f_k(S_{k-1}) Z_k, plus an error budget.

    Backward functions live on a uniform grid wide enough to hold the
    diffusive mass plus the cumulative non-negative shifts x -> x + lam f_k(x).
    The inner Gaussian expectation is a discrete convolution with hat-function
    weights, exact for the piecewise-linear representation (kinked f_k are
    handled without quadrature bias); everything is carried in log-space with
    a running max shift.  ``quad_nodes`` is accepted for interface parity but
    the convolution does not need it.  f_k are assumed bounded on the working
    span; far tails are continued by chords.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    fns = [_as_fn(f) for f in fks]
    n = len(fns)
    if n == 0:
        return 0.0, 0.0

    reach = 6.0 * math.sqrt(n) + 2.0
    shift = 0.0
    for fn in fns:
        probe = np.linspace(-reach - shift, reach + shift, 257)
        fv = np.asarray(fn(probe), dtype=float)
        if np.min(fv) < -1e-12:
            raise ValueError("laplace recursion requires non-negative f_k")
        shift += lam * float(np.max(fv))
    h = (2.0 * reach + shift) / (int(grid_points) - 1)
    j_lo = -int(math.ceil(reach / h))
    j_hi = int(math.ceil((reach + shift) / h))
    xs = h * np.arange(j_lo, j_hi + 1)

    kernel = _gaussian_hat_kernel(h)
    half = (kernel.size - 1) // 2
    ftilde = np.zeros(xs.size)
    budget = 0.0
    for k in range(n - 1, -1, -1):
        fv = np.maximum(np.asarray(fns[k](xs), dtype=float), 0.0)
        m = float(np.max(ftilde))
        g = np.exp(ftilde - m)
        # chord-extend the sampled function across the kernel reach
        ls = (g[1] - g[0]) / h
        rs = (g[-1] - g[-2]) / h
        left = g[0] + ls * h * np.arange(-half, 0)
        right = g[-1] + rs * h * np.arange(1, half + 1)
        gpad = np.maximum(np.concatenate([left, g, right]), 0.0)
        smoothed = np.convolve(gpad, kernel[::-1], mode="valid")
        args = xs + lam * fv
        inner = interp_chord(xs, smoothed, args)
        ftilde = 0.5 * lam * lam * fv * fv + m + np.log(np.maximum(inner, 1e-300))
        slopes = np.diff(ftilde) / h
        if slopes.size >= 2:
            budget += float(np.max(np.abs(np.diff(slopes))) * h / 8.0)
    log_value = float(np.interp(0.0, xs, ftilde))
    return log_value, budget


def laplace_recursion(
    fks: Sequence, lam: float, quad_nodes: int = 64, grid_points: int = 4097
) -> float:
    """E exp(lam X_n) via the backward recursion (computed in log-space)."""
    log_value, _ = laplace_recursion_log(fks, lam, quad_nodes, grid_points)
    if log_value > _MAX_EXP:
        raise OverflowDetected(f"log E exp(lam X_n) = {log_value:.3g} exceeds float range")
    return math.exp(log_value)


@dataclass
class LaplaceRow:
    lam: float
    value_lo: float
    value_hi: float
    log_lo: float
    log_hi: float
    dominates: bool
    tolerance: float


@dataclass
class LaplaceComparison:
    rows: list[LaplaceRow]

    @property
    def all_dominate(self) -> bool:
        return all(r.dominates for r in self.rows)


def compare_laplace(
    fks: Sequence,
    gks: Sequence,
    lambdas: Sequence[float],
    quad_nodes: int = 64,
    grid_points: int = 4097,
    probe: np.ndarray | None = None,
) -> LaplaceComparison:
    """Dominance of E exp(lam X_n) <= E exp(lam Y_n) per lambda.

    Requires 0 <= f_k <= g_k on the probe grid and all f_k or all g_k
    non-decreasing there.
    """
    if len(fks) != len(gks):
        raise ValueError("fks and gks must have equal length")
    xs = np.linspace(-30.0, 30.0, 1201) if probe is None else np.asarray(probe, dtype=float)
    f_fns = [_as_fn(f) for f in fks]
    g_fns = [_as_fn(g) for g in gks]
    f_mono = True
    g_mono = True
    for k, (f, g) in enumerate(zip(f_fns, g_fns)):
        fv, gv = np.asarray(f(xs), float), np.asarray(g(xs), float)
        if np.min(fv) < -1e-12:
            raise HypothesisUnverifiable(f"f_{k} takes negative values on the probe grid")
        if np.max(fv - gv) > 1e-12:
            raise HypothesisUnverifiable(f"f_{k} <= g_{k} fails on the probe grid")
        f_mono = f_mono and bool(np.all(np.diff(fv) >= -1e-12))
        g_mono = g_mono and bool(np.all(np.diff(gv) >= -1e-12))
    if not (f_mono or g_mono):
        raise HypothesisUnverifiable("neither all f_k nor all g_k are non-decreasing")

    rows = []
    for lam in lambdas:
        lf, bf = laplace_recursion_log(f_fns, lam, quad_nodes, grid_points)
        lg, bg = laplace_recursion_log(g_fns, lam, quad_nodes, grid_points)
        tol = bf + bg + 1e-10
        rows.append(
            LaplaceRow(
                lam=float(lam),
                value_lo=math.exp(lf) if lf <= _MAX_EXP else math.inf,
                value_hi=math.exp(lg) if lg <= _MAX_EXP else math.inf,
                log_lo=lf, log_hi=lg, dominates=lf <= lg + tol, tolerance=tol,
            )
        )
    return LaplaceComparison(rows)


# -- Doleans one-step operator ----------------------------------------------------


def doleans_step(f, x: float, h: float, dt: float, quad_nodes: int = 64) -> float:
    """E f(x exp(h sqrt(dt) N - dt h^2 / 2)); exact for piecewise-linear f."""
    if x < 0:
        raise ValueError("x must be >= 0 (geometric state)")
    if dt <= 0:
        raise ValueError("dt must be positive")
    sig = abs(h) * math.sqrt(dt)
    if not isinstance(f, ScalarConvexFn):
        f = ScalarConvexFn.custom(f, growth_r=1.0)
    if sig == 0.0:
        return float(f(x))
    if f.kind == "piecewise_linear":
        out = f.const + f.slope * x  # E of the geometric factor is 1
        for k, c in zip(f.knots, f.coefs):
            out += c * lognormal_call(x, k, sig)
        return float(out)
    if f.kind == "power":
        return x**f.p * math.exp(0.5 * f.p * (f.p - 1.0) * sig * sig)
    if f.kind == "exp_affine" and f.lam > 0:
        raise GrowthMismatch("exp(lam x) with lam > 0 is not integrable against a lognormal")
    z, w = hermite_nodes(quad_nodes)
    vals = f(x * np.exp(sig * z - 0.5 * sig * sig))
    return float(w @ vals)
