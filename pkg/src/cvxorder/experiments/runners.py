"""Experiment runners.

Every comparison feeds both sides identical innovation draws (common random
numbers), block by keyed block, so paired differences carry almost no noise
and a model compared with itself differs bitwise by zero.  Exact backends
(quadrature, enumeration, closed forms) are used whenever available and are
labeled as exact in the reports.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..blackscholes import bs_call
from ..coeffs import CoefficientFn
from ..convexfns import ScalarConvexFn, hermite_nodes
from ..dynamics import (
    GridSpec,
    IntegralState,
    deterministic_rule,
    doleans_batch,
    driver_rule,
    euler_brownian_batch,
    euler_levy_batch,
    local_vol_batch,
    stoch_integral_batch,
)
from ..errors import (
    BoundsUncertified,
    ConfigError,
    DominationViolated,
    HypothesisUnverifiable,
    ParamOutOfRange,
)
from ..noise import LevySpec, _levy_increments
from ..operators import compare_laplace, doleans_step
from ..payoffs import BermudanPayoff, PayoffFunctional
from ..rng import BLOCK_ROWS, RngStream
from ..snell import LatticeModel, compare_bermudan as snell_compare, refine_study as snell_refine, snell_bdpp
from .config import (
    default_config,
    merge_config,
    parse_coefficient,
    parse_h_values,
    parse_levy,
    parse_payoff,
    validate_config,
)
from .reports import (
    DOMINANCE,
    INCONCLUSIVE,
    VIOLATION,
    ComparisonReport,
    ExperimentOutcome,
    classify_outcome,
    make_report,
    write_outcome_files,
)

log = logging.getLogger("cvxorder")


# -- market models -----------------------------------------------------------


@dataclass(frozen=True)
class EulerModel:
    sigma: CoefficientFn
    x0: float


@dataclass(frozen=True)
class LocalVolModel:
    sigma: CoefficientFn
    s0: float


@dataclass(frozen=True)
class LevyModel:
    kappa: CoefficientFn
    levy: LevySpec
    x0: float


Model = EulerModel | LocalVolModel | LevyModel


def parse_model(d: dict) -> Model:
    typ = d["type"]
    if typ == "euler":
        return EulerModel(parse_coefficient(d["sigma"]), float(d.get("x0", 0.0)))
    if typ == "local_vol":
        return LocalVolModel(parse_coefficient(d["sigma"]), float(d.get("s0", 100.0)))
    return LevyModel(
        parse_coefficient(d["kappa"]), parse_levy(d["levy"]), float(d.get("x0", 0.0))
    )


def _driver_of(models: Sequence[Model]) -> tuple[str, LevySpec | None]:
    levies = [m.levy for m in models if isinstance(m, LevyModel)]
    if levies and len(levies) != len(models):
        raise ConfigError("cannot pair a Levy-driven model with a Brownian one under CRN")
    if levies:
        first = levies[0]
        if any(lv != first for lv in levies[1:]):
            raise ConfigError("CRN requires the same Levy driver on both sides")
        return "levy", first
    return "gaussian", None


def _simulate_on_draws(model: Model, grid: GridSpec, draws: np.ndarray) -> tuple[np.ndarray, int]:
    if isinstance(model, EulerModel):
        return euler_brownian_batch(model.sigma, grid, model.x0, draws), 0
    if isinstance(model, LocalVolModel):
        return local_vol_batch(model.sigma, grid, model.s0, draws)
    return euler_levy_batch(model.kappa, grid, model.x0, draws), 0


def paired_payoff_samples(
    models: Sequence[Model],
    payoff: PayoffFunctional,
    grid: GridSpec,
    seed: int,
    n_paths: int,
    threads: int = 1,
) -> tuple[list[np.ndarray], dict]:
    """Payoff samples per model on shared draws, assembled from keyed blocks."""
    driver, levy = _driver_of(models)
    n_blocks = (n_paths + BLOCK_ROWS - 1) // BLOCK_ROWS

    def one(b: int) -> tuple[list[np.ndarray], list[int]]:
        rows = min(BLOCK_ROWS, n_paths - b * BLOCK_ROWS)
        gen = RngStream(seed, b).gen
        if driver == "gaussian":
            draws = gen.standard_normal((rows, grid.n))
        else:
            draws = _levy_increments(levy, grid.dt, gen, (rows, grid.n))
        samples, nonpos = [], []
        for model in models:
            vals, np_count = _simulate_on_draws(model, grid, draws)
            samples.append(payoff.eval_values(vals))
            nonpos.append(np_count)
        return samples, nonpos

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(n_blocks)))
    else:
        parts = [one(b) for b in range(n_blocks)]
    samples = [
        np.concatenate([p[0][i] for p in parts]) if n_blocks > 1 else parts[0][0][i]
        for i in range(len(models))
    ]
    nonpos = [sum(p[1][i] for p in parts) for i in range(len(models))]
    return samples, {"nonpositive_paths": nonpos, "driver": driver}


# -- operation-level runners ----------------------------------------------------


def mc_compare_european(
    model_lo: Model,
    model_hi: Model,
    payoff: PayoffFunctional,
    grid: GridSpec,
    n_paths: int,
    seed: int,
    z: float = 3.0,
    threads: int = 1,
) -> ComparisonReport:
    """Paired CRN test of E F(X_lo) <= E F(X_hi) at the shared time grid."""
    (lo, hi), diag = paired_payoff_samples([model_lo, model_hi], payoff, grid, seed, n_paths, threads)
    extra = {
        "payoff_convex": payoff.convex,
        "nonpositive_paths": diag["nonpositive_paths"],
        "note": "both sides share one Euler time grid, so the discrete-time inequality is tested directly",
    }
    return make_report("compare_european", lo, hi, seed, z=z, extra=extra)


def run_compare_european(cfg: dict) -> ExperimentOutcome:
    p = cfg["params"]
    grid = GridSpec(cfg["grid"]["n"], cfg["grid"]["T"])
    rep = mc_compare_european(
        parse_model(p["model_lo"]), parse_model(p["model_hi"]), parse_payoff(p["payoff"]),
        grid, cfg["n_paths"], cfg["seed"], cfg["z"], cfg["threads"],
    )
    table = (
        ["label", "estimate_lhs", "estimate_rhs", "se_lhs", "se_rhs", "paired_diff_mean", "paired_diff_se", "verdict"],
        [[rep.label, rep.estimate_lhs, rep.estimate_rhs, rep.se_lhs, rep.se_rhs, rep.paired_diff_mean, rep.paired_diff_se, rep.verdict]],
    )
    return ExperimentOutcome(
        experiment="compare_european",
        outcome=classify_outcome(rep.verdict, cfg["expected"]),
        verdict=rep.verdict, expected=cfg["expected"],
        report={"config": cfg, "comparison": rep.to_dict()},
        tables={"summary": table},
    )


def _pl_terminal_bs_value(f: ScalarConvexFn, s0: float, T: float, sigma: float) -> float:
    """Exact E f(S_T) in the Black-Scholes model for piecewise-linear f."""
    out = f.const + f.slope * s0
    for k, c in zip(f.knots, f.coefs):
        out += c * bs_call(s0, k, T, sigma)
    return float(out)


def bs_sandwich(
    sigma: CoefficientFn,
    payoff: PayoffFunctional,
    grid: GridSpec,
    n_paths: int,
    seed: int,
    s0: float,
    z: float = 3.0,
    threads: int = 1,
) -> dict:
    """Bracket the local-vol Monte-Carlo value by the two Black-Scholes ends.

    The discretization budget delta_n = s0 sigma_max^2 T / n is the package's
    explicit first-order allowance for the Euler weak error of the middle
    value; both ends are closed forms.
    """
    if not sigma.bounded or sigma.bounds is None:
        raise BoundsUncertified("sandwich requires a descriptor-certified bounded sigma")
    lo_v, hi_v = sigma.bounds
    if lo_v < 0:
        raise BoundsUncertified("sandwich requires non-negative volatility bounds")
    if payoff.kind != "terminal" or payoff.f is None or payoff.f.kind != "piecewise_linear":
        raise ConfigError("sandwich payoff must be terminal with piecewise-linear f")
    bs_lo = _pl_terminal_bs_value(payoff.f, s0, grid.T, lo_v)
    bs_hi = _pl_terminal_bs_value(payoff.f, s0, grid.T, hi_v)
    (samples,), diag = paired_payoff_samples(
        [LocalVolModel(sigma, s0)], payoff, grid, seed, n_paths, threads
    )
    mc = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
    delta_n = s0 * hi_v**2 * grid.T / grid.n
    lower_ok = mc >= bs_lo - z * se - delta_n
    upper_ok = mc <= bs_hi + z * se + delta_n
    verdict = DOMINANCE if (lower_ok and upper_ok) else VIOLATION
    if not math.isfinite(mc):
        verdict = INCONCLUSIVE
    return {
        "bs_lower": bs_lo, "bs_upper": bs_hi, "mc_value": mc, "mc_se": se,
        "sigma_bounds": [lo_v, hi_v], "delta_n": delta_n,
        "n_paths": int(samples.size), "seed": int(seed), "verdict": verdict,
        "tolerance": {"z": z, "mc_se": se, "discretization_budget": delta_n,
                      "policy": "delta_n = s0 * sigma_max^2 * T / n"},
        "nonpositive_paths": diag["nonpositive_paths"][0],
    }


def run_sandwich(cfg: dict) -> ExperimentOutcome:
    p = cfg["params"]
    grid = GridSpec(cfg["grid"]["n"], cfg["grid"]["T"])
    res = bs_sandwich(
        parse_coefficient(p["sigma"]), parse_payoff(p["payoff"]), grid,
        cfg["n_paths"], cfg["seed"], float(p["s0"]), cfg["z"], cfg["threads"],
    )
    table = (
        ["quantity", "value", "se"],
        [
            ["bs_sigma_min", res["bs_lower"], 0.0],
            ["mc_local_vol", res["mc_value"], res["mc_se"]],
            ["bs_sigma_max", res["bs_upper"], 0.0],
        ],
    )
    return ExperimentOutcome(
        experiment="sandwich",
        outcome=classify_outcome(res["verdict"], cfg["expected"]),
        verdict=res["verdict"], expected=cfg["expected"],
        report={"config": cfg, "sandwich": res},
        tables={"values": table},
    )


def peacock_scan(
    sigma_values: Sequence[float],
    payoff: PayoffFunctional,
    grid: GridSpec,
    n_paths: int,
    seed: int,
    s0: float,
    z: float = 3.0,
    threads: int = 1,
) -> dict:
    """Monotone-in-volatility scan with CRN across all volatility levels."""
    sig = [float(v) for v in sigma_values]
    if any(b < a for a, b in zip(sig, sig[1:])):
        raise ConfigError("sigma_values must be ascending")
    models = [LocalVolModel(CoefficientFn.constant(v), s0) for v in sig]
    samples, _ = paired_payoff_samples(models, payoff, grid, seed, n_paths, threads)
    rows = []
    for v, smp in zip(sig, samples):
        rows.append(
            {"sigma": v, "estimate": float(np.mean(smp)),
             "se": float(np.std(smp, ddof=1) / math.sqrt(smp.size))}
        )
    pairs = []
    all_ok = True
    for i in range(len(sig) - 1):
        rep = make_report(f"sigma {sig[i]} vs {sig[i+1]}", samples[i], samples[i + 1], seed, z=z)
        pairs.append(rep.to_dict())
        all_ok = all_ok and rep.verdict == DOMINANCE
    strict = None
    if len(sig) >= 2:
        diff = samples[-1] - samples[0]
        dm = float(np.mean(diff))
        ds = float(np.std(diff, ddof=1) / math.sqrt(diff.size))
        strict = {"diff_mean": dm, "diff_se": ds, "significant_increase": dm > z * ds}
    verdict = DOMINANCE if all_ok else VIOLATION
    return {"levels": rows, "pairs": pairs, "last_vs_first": strict,
            "verdict": verdict, "n_paths": n_paths, "seed": seed, "tolerance": {"z": z}}


def run_peacock(cfg: dict) -> ExperimentOutcome:
    p = cfg["params"]
    grid = GridSpec(cfg["grid"]["n"], cfg["grid"]["T"])
    res = peacock_scan(
        p["sigma_values"], parse_payoff(p["payoff"]), grid,
        cfg["n_paths"], cfg["seed"], float(p["s0"]), cfg["z"], cfg["threads"],
    )
    table = (
        ["sigma", "estimate", "se"],
        [[r["sigma"], r["estimate"], r["se"]] for r in res["levels"]],
    )
    return ExperimentOutcome(
        experiment="peacock",
        outcome=classify_outcome(res["verdict"], cfg["expected"]),
        verdict=res["verdict"], expected=cfg["expected"],
        report={"config": cfg, "peacock": res},
        tables={"scan": table},
    )


# -- stochastic-integral comparisons ---------------------------------------------


def _integrand_registry(form: str, h: np.ndarray, coef: CoefficientFn | None):
    """Adapted integrand H from a named form; returns (rule, sup_bound or None)."""
    if form == "deterministic":
        return deterministic_rule(h), float(np.max(np.abs(h)))
    if form == "abs_sin":
        def rule(state: IntegralState) -> np.ndarray:
            return h[state.k] * np.abs(np.sin(state.driver))
        return rule, float(np.max(np.abs(h)))
    if form == "one_plus_abs":
        def rule(state: IntegralState) -> np.ndarray:
            return h[state.k] * (1.0 + np.abs(state.driver))
        return rule, None
    if form == "coefficient":
        if coef is None:
            raise ConfigError("integrand form 'coefficient' requires a coefficient descriptor")
        bound = None
        if coef.bounded and coef.bounds is not None:
            bound = max(abs(coef.bounds[0]), abs(coef.bounds[1]))
        return driver_rule(coef), bound
    raise ConfigError(f"unknown integrand form {form!r}")


def _integral_comparison(
    scheme: str,
    rule,
    h: np.ndarray,
    payoff: PayoffFunctional,
    grid: GridSpec,
    n_paths: int,
    seed: int,
    direction: str,
    z: float,
    threads: int,
) -> ComparisonReport:
    """Shared driver for additive (ito) and multiplicative (doleans) schemes."""
    n_blocks = (n_paths + BLOCK_ROWS - 1) // BLOCK_ROWS
    det = deterministic_rule(h)
    times = grid.times[:-1]
    tol = 1e-12

    def one(b: int):
        rows = min(BLOCK_ROWS, n_paths - b * BLOCK_ROWS)
        gen = RngStream(seed, b).gen
        zmat = gen.standard_normal((rows, grid.n))
        if scheme == "ito":
            dw = math.sqrt(grid.dt) * zmat
            x_vals, hs = stoch_integral_batch(rule, dw, times)
            y_vals, _ = stoch_integral_batch(det, dw, times)
        else:
            x_vals, hs = doleans_batch(rule, grid, zmat)
            y_vals, _ = doleans_batch(det, grid, zmat)
        if direction == "upper":
            bad = int(np.sum(np.abs(hs) > h[None, :] + tol))
        else:
            bad = int(np.sum(hs < h[None, :] - tol)) + int(np.sum(h < -tol))
        return payoff.eval_values(x_vals), payoff.eval_values(y_vals), bad

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(n_blocks)))
    else:
        parts = [one(b) for b in range(n_blocks)]
    x = np.concatenate([p[0] for p in parts]) if n_blocks > 1 else parts[0][0]
    y = np.concatenate([p[1] for p in parts]) if n_blocks > 1 else parts[0][1]
    violations = sum(p[2] for p in parts)
    if violations > 0:
        raise DominationViolated(
            f"{violations} sampled integrand values break the declared "
            f"{'|H| <= h' if direction == 'upper' else 'H >= h >= 0'} inequality"
        )
    label = f"{scheme}_{direction}"
    extra = {"direction": direction, "monitored_violations": 0}
    if direction == "upper":
        return make_report(label, x, y, seed, z=z, extra=extra)
    return make_report(label, y, x, seed, z=z, extra=extra)


def ito_integrand_compare(
    rule, h: np.ndarray, payoff: PayoffFunctional, grid: GridSpec,
    n_paths: int, seed: int, direction: str = "upper", z: float = 3.0, threads: int = 1,
) -> ComparisonReport:
    return _integral_comparison("ito", rule, h, payoff, grid, n_paths, seed, direction, z, threads)


def doleans_compare(
    rule, h: np.ndarray, payoff: PayoffFunctional, grid: GridSpec,
    n_paths: int, seed: int, direction: str = "upper", z: float = 3.0, threads: int = 1,
    rule_bound: float | None = None,
) -> ComparisonReport:
    if direction == "lower" and rule_bound is None:
        raise HypothesisUnverifiable(
            "doleans lower comparison needs an exponential-moment guard: "
            "use an integrand form with a certified sup bound"
        )
    return _integral_comparison("doleans", rule, h, payoff, grid, n_paths, seed, direction, z, threads)


def _run_integral_like(cfg: dict, scheme: str) -> ExperimentOutcome:
    p = cfg["params"]
    grid = GridSpec(cfg["grid"]["n"], cfg["grid"]["T"])
    h = parse_h_values(p["h"], grid.n)
    coef = parse_coefficient(p["integrand"]["coefficient"]) if "coefficient" in p["integrand"] else None
    rule_h = p["integrand"].get("h", p["h"])
    rule, bound = _integrand_registry(p["integrand"]["form"], parse_h_values(rule_h, grid.n), coef)
    payoff = parse_payoff(p["payoff"])
    if scheme == "ito":
        rep = ito_integrand_compare(
            rule, h, payoff, grid, cfg["n_paths"], cfg["seed"], p["direction"], cfg["z"], cfg["threads"]
        )
    else:
        rep = doleans_compare(
            rule, h, payoff, grid, cfg["n_paths"], cfg["seed"], p["direction"], cfg["z"], cfg["threads"],
            rule_bound=bound,
        )
        if float(np.min(h)) == float(np.max(h)) and payoff.kind == "terminal" and payoff.f.kind == "piecewise_linear":
            closed = doleans_step(payoff.f, 1.0, float(h[0]), grid.T)
            side = rep.estimate_rhs if p["direction"] == "upper" else rep.estimate_lhs
            se = rep.se_rhs if p["direction"] == "upper" else rep.se_lhs
            rep.extra["h_side_closed_form"] = closed
            rep.extra["h_side_abs_error"] = abs(side - closed)
            rep.extra["h_side_within_3se"] = abs(side - closed) <= 3.0 * se
    name = "ito_compare" if scheme == "ito" else "doleans_compare"
    table = (
        ["label", "estimate_lhs", "estimate_rhs", "paired_diff_mean", "paired_diff_se", "verdict"],
        [[rep.label, rep.estimate_lhs, rep.estimate_rhs, rep.paired_diff_mean, rep.paired_diff_se, rep.verdict]],
    )
    return ExperimentOutcome(
        experiment=name,
        outcome=classify_outcome(rep.verdict, cfg["expected"]),
        verdict=rep.verdict, expected=cfg["expected"],
        report={"config": cfg, "comparison": rep.to_dict()},
        tables={"summary": table},
    )


# -- Laplace / completely monotone -----------------------------------------------


def run_laplace(cfg: dict) -> ExperimentOutcome:
    """Exact Laplace-transform recursion dominance, with an MC cross-check."""
    p = cfg["params"]
    f_coefs = [parse_coefficient(d) for d in p["f"]]
    g_coefs = [parse_coefficient(d) for d in p["g"]]
    n = len(f_coefs)
    f_fns = [lambda x, c=c: c(0.0, x) for c in f_coefs]
    g_fns = [lambda x, c=c: c(0.0, x) for c in g_coefs]
    comp = compare_laplace(f_fns, g_fns, p["lambdas"], quad_nodes=cfg["quad_nodes"])
    mc_paths = int(p.get("mc_paths", min(cfg["n_paths"], 1_000_000)))
    gen = RngStream(cfg["seed"], 0).gen
    zmat = gen.standard_normal((mc_paths, n))
    s = np.concatenate([np.zeros((mc_paths, 1)), np.cumsum(zmat, axis=1)], axis=1)
    xf = np.zeros(mc_paths)
    xg = np.zeros(mc_paths)
    for k in range(n):
        xf += f_fns[k](s[:, k]) * zmat[:, k]
        xg += g_fns[k](s[:, k]) * zmat[:, k]
    rows = []
    all_ok = True
    for row in comp.rows:
        ef = np.exp(row.lam * xf)
        mc_mean = float(np.mean(ef))
        mc_se = float(np.std(ef, ddof=1) / math.sqrt(mc_paths))
        agree = abs(mc_mean - row.value_lo) <= 3.0 * mc_se
        rows.append({
            "lambda": row.lam, "value_lo": row.value_lo, "value_hi": row.value_hi,
            "dominates": row.dominates, "tolerance": row.tolerance,
            "mc_value_lo": mc_mean, "mc_se": mc_se, "mc_agrees_3se": agree,
        })
        all_ok = all_ok and row.dominates and agree
    verdict = DOMINANCE if all_ok else VIOLATION
    table = (
        ["lambda", "value_lo", "value_hi", "dominates", "mc_value_lo", "mc_se"],
        [[r["lambda"], r["value_lo"], r["value_hi"], r["dominates"], r["mc_value_lo"], r["mc_se"]] for r in rows],
    )
    return ExperimentOutcome(
        experiment="laplace",
        outcome=classify_outcome(verdict, cfg["expected"]),
        verdict=verdict, expected=cfg["expected"],
        report={"config": cfg, "rows": rows, "backend": "exact_recursion+mc_oracle"},
        tables={"lambdas": table},
    )


def completely_monotone_compare(
    f: CoefficientFn,
    g: CoefficientFn,
    mixture: Sequence[tuple[float, float]],
    grid: GridSpec,
    n_paths: int,
    seed: int,
    z: float = 3.0,
    threads: int = 1,
) -> dict:
    """E phi(int f(t,W)dW) <= E phi(int g(t,W)dW) for phi(x) = sum w exp(lam x)."""
    probe = np.linspace(-30.0, 30.0, 601)
    for t in (0.0, grid.T / 2, grid.T):
        fv, gv = f(t, probe), g(t, probe)
        if np.min(fv) < -1e-12 or np.max(fv - gv) > 1e-12:
            raise HypothesisUnverifiable("need 0 <= f <= g on the probe grid")
    if not (f.nondecreasing_in_x or g.nondecreasing_in_x):
        raise HypothesisUnverifiable("need f or g certified non-decreasing in x")
    weights = [(float(w), float(lam)) for w, lam in mixture]
    if any(w < 0 or lam < 0 for w, lam in weights):
        raise ConfigError("mixture weights and exponents must be >= 0")

    n_blocks = (n_paths + BLOCK_ROWS - 1) // BLOCK_ROWS
    times = grid.times[:-1]

    def one(b: int):
        rows = min(BLOCK_ROWS, n_paths - b * BLOCK_ROWS)
        gen = RngStream(seed, b).gen
        dw = math.sqrt(grid.dt) * gen.standard_normal((rows, grid.n))
        xf, _ = stoch_integral_batch(driver_rule(f), dw, times)
        xg, _ = stoch_integral_batch(driver_rule(g), dw, times)
        return xf[:, -1], xg[:, -1]

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(n_blocks)))
    else:
        parts = [one(b) for b in range(n_blocks)]
    xf = np.concatenate([p[0] for p in parts]) if n_blocks > 1 else parts[0][0]
    xg = np.concatenate([p[1] for p in parts]) if n_blocks > 1 else parts[0][1]

    per_lambda = []
    all_ok = True
    for w, lam in weights:
        rep = make_report(f"lambda={lam}", np.exp(lam * xf), np.exp(lam * xg), seed, z=z)
        per_lambda.append({"weight": w, "lambda": lam, **rep.to_dict()})
        all_ok = all_ok and rep.verdict == DOMINANCE
    phi_f = np.zeros_like(xf)
    phi_g = np.zeros_like(xg)
    for w, lam in weights:
        phi_f += w * np.exp(lam * xf)
        phi_g += w * np.exp(lam * xg)
    mixed = make_report("mixture", phi_f, phi_g, seed, z=z)
    all_ok = all_ok and mixed.verdict == DOMINANCE
    return {
        "per_lambda": per_lambda, "mixture": mixed.to_dict(),
        "verdict": DOMINANCE if all_ok else VIOLATION,
        "n_paths": n_paths, "seed": seed, "tolerance": {"z": z},
    }


def run_cm_compare(cfg: dict) -> ExperimentOutcome:
    p = cfg["params"]
    grid = GridSpec(cfg["grid"]["n"], cfg["grid"]["T"])
    res = completely_monotone_compare(
        parse_coefficient(p["f"]), parse_coefficient(p["g"]),
        [(w, lam) for w, lam in p["mixture"]], grid,
        cfg["n_paths"], cfg["seed"], cfg["z"], cfg["threads"],
    )
    table = (
        ["lambda", "weight", "estimate_lhs", "estimate_rhs", "verdict"],
        [[r["lambda"], r["weight"], r["estimate_lhs"], r["estimate_rhs"], r["verdict"]] for r in res["per_lambda"]],
    )
    return ExperimentOutcome(
        experiment="cm_compare",
        outcome=classify_outcome(res["verdict"], cfg["expected"]),
        verdict=res["verdict"], expected=cfg["expected"],
        report={"config": cfg, "cm_compare": res},
        tables={"lambdas": table},
    )


# -- counterexamples -------------------------------------------------------------


def counterexample_two_period(
    c: float,
    x0: float,
    sigma_grid: Sequence[float] | None = None,
    quad_nodes: int = 64,
    fd_step: float = 0.01,
) -> dict:
    """Two-period dynamics with a non-convex volatility bump: the value of a
    convex payoff is locally decreasing in sigma.

    v(x) = c exp(-(x - x0)^2), so v''(x0) = -2c; c > 1/2 makes the curvature
    of sigma -> E exp(X_2) strictly negative at sigma = 0, where the analytic
    value is exp(x0 + c) (1 - 2c).
    """
    if c <= 0.5:
        raise ParamOutOfRange("need c > 1/2 so that v''(x0) = -2c < -1")
    if sigma_grid is None:
        sigma_grid = np.round(np.linspace(0.0, 1.0, 21), 10)
    sigma_grid = np.asarray(sorted(set(float(s) for s in sigma_grid) | {0.0}))
    z, w = hermite_nodes(quad_nodes)

    def phi(sig: float) -> float:
        v = c * np.exp(-((x0 + sig * z) - x0) ** 2)
        return float(math.exp(x0) * (w @ np.exp(sig * z + v)))

    curve = [(float(s), phi(float(s))) for s in sigma_grid]
    h = fd_step
    fd2 = (phi(h) - 2.0 * phi(0.0) + phi(-h)) / (h * h)
    analytic = math.exp(x0 + c) * (1.0 - 2.0 * c)
    rel_err = abs(fd2 - analytic) / abs(analytic)
    run_end = 0
    vals = [v for _, v in curve]
    while run_end + 1 < len(vals) and vals[run_end + 1] < vals[run_end] - 1e-15:
        run_end += 1
    sigma0 = float(sigma_grid[run_end])
    reproduced = fd2 < 0 and run_end >= 1 and rel_err <= 1e-3
    return {
        "c": c, "x0": x0, "curve": curve, "fd_second_derivative": fd2,
        "analytic_second_derivative": analytic, "relative_error": rel_err,
        "decreasing_until_sigma": sigma0, "strictly_decreasing_points": run_end,
        "reproduced": reproduced, "quad_nodes": quad_nodes, "fd_step": fd_step,
    }


def run_counterexample_2period(cfg: dict) -> ExperimentOutcome:
    p = cfg["params"]
    res = counterexample_two_period(
        c=float(p.get("c", 1.0)), x0=float(p.get("x0", 0.0)),
        sigma_grid=p.get("sigma_grid"), quad_nodes=cfg["quad_nodes"],
        fd_step=float(p.get("fd_step", 0.01)),
    )
    table = (["sigma", "phi"], [[s, v] for s, v in res["curve"]])
    outcome = "as_expected" if res["reproduced"] else "unexpected"
    return ExperimentOutcome(
        experiment="counterexample_2period",
        outcome=outcome, verdict=None, expected="counterexample_reproduced",
        report={"config": cfg, "counterexample": res},
        tables={"curve": table},
    )


def counterexample_integrand(
    sigma_pair: tuple[float, float],
    n_paths: int,
    seed: int,
    v: Callable[[np.ndarray], np.ndarray] | None = None,
    quad_nodes: int = 64,
    scan_max: float = 2.0,
    z: float = 3.0,
) -> dict:
    """Stochastic dominating integrand reverses the ordering.

    With v bounded, non-increasing and non-constant, phi(sigma) =
    E exp(sigma Z + v(Z)) is strictly decreasing near 0 even though the
    integrand sigma 1_[0,1] + sqrt(2 v(W_1)) 1_(1,2] is pointwise increasing
    in sigma.  Exact values come from the conditional-Gaussian reduction; a
    two-block Monte Carlo confirms them.
    """
    if v is None:
        v = lambda x: 1.0 / (1.0 + np.exp(2.0 * x))
    probe = np.linspace(-40.0, 40.0, 1601)
    pv = np.asarray(v(probe), dtype=float)
    if np.any(np.diff(pv) > 1e-12):
        raise HypothesisUnverifiable("v must be non-increasing")
    if np.max(pv) - np.min(pv) < 1e-9:
        raise HypothesisUnverifiable("v must be non-constant")
    if not np.all(np.isfinite(pv)) or np.max(np.abs(pv)) > 1e6:
        raise HypothesisUnverifiable("v must be bounded")

    zq, wq = hermite_nodes(quad_nodes)
    ev = np.exp(np.asarray(v(zq), dtype=float))

    def phi_quad(sig: float) -> float:
        return float(wq @ (np.exp(sig * zq) * ev))

    scan = np.linspace(0.0, scan_max, 81)
    vals = np.array([phi_quad(s) for s in scan])
    inc = np.nonzero(np.diff(vals) >= 0)[0]
    sigma0 = float(scan[inc[0]]) if inc.size else float(scan[-1])
    sig, sig_t = float(sigma_pair[0]), float(sigma_pair[1])
    if not (0.0 < sig < sig_t <= sigma0):
        raise HypothesisUnverifiable(
            f"need 0 < sigma < sigma_tilde <= sigma0 = {sigma0:.4g} (largest grid point "
            "before the quadrature curve turns increasing)"
        )
    phi_prime_0 = float(wq @ (zq * ev))
    q_lo, q_hi = phi_quad(sig), phi_quad(sig_t)

    gen = RngStream(seed, 0).gen
    z1 = gen.standard_normal(n_paths)
    z2 = gen.standard_normal(n_paths)
    spread = np.sqrt(2.0 * np.asarray(v(z1), dtype=float))
    mc = {}
    for name, s in (("sigma", sig), ("sigma_tilde", sig_t)):
        samples = np.exp(s * z1 + spread * z2)
        mean = float(np.mean(samples))
        se = float(np.std(samples, ddof=1) / math.sqrt(n_paths))
        mc[name] = {"mean": mean, "se": se}
    agree_lo = abs(mc["sigma"]["mean"] - q_lo) <= z * mc["sigma"]["se"]
    agree_hi = abs(mc["sigma_tilde"]["mean"] - q_hi) <= z * mc["sigma_tilde"]["se"]
    reversal = q_lo > q_hi
    reproduced = reversal and phi_prime_0 < 0 and agree_lo and agree_hi
    return {
        "sigma_pair": [sig, sig_t], "sigma0": sigma0,
        "phi_prime_at_0": phi_prime_0,
        "quadrature": {"sigma": q_lo, "sigma_tilde": q_hi, "reversal": reversal},
        "mc": mc, "mc_agrees_3se": bool(agree_lo and agree_hi),
        "scan_curve": [[float(s), float(vv)] for s, vv in zip(scan, vals)],
        "reproduced": reproduced, "n_paths": n_paths, "seed": seed,
        "tolerance": {"z": z, "backend": "quadrature exact + MC cross-check"},
    }


def run_counterexample_integrand(cfg: dict) -> ExperimentOutcome:
    p = cfg["params"]
    scale = float(p.get("v_scale", 1.0))
    v = lambda x: 1.0 / (1.0 + np.exp(2.0 * np.asarray(x) / scale))
    res = counterexample_integrand(
        tuple(p.get("sigma_pair", [0.05, 0.15])), cfg["n_paths"], cfg["seed"],
        v=v, quad_nodes=cfg["quad_nodes"], scan_max=float(p.get("scan_max", 2.0)), z=cfg["z"],
    )
    table = (["sigma", "phi"], [[s, vv] for s, vv in res["scan_curve"]])
    outcome = "as_expected" if res["reproduced"] else "unexpected"
    return ExperimentOutcome(
        experiment="counterexample_integrand",
        outcome=outcome, verdict=None, expected="counterexample_reproduced",
        report={"config": cfg, "counterexample": res},
        tables={"curve": table},
    )


# -- Bermudan --------------------------------------------------------------------


def run_compare_bermudan(cfg: dict) -> ExperimentOutcome:
    p = cfg["params"]
    n_dates = int(p.get("n_dates", 12))
    T = float(p.get("T", 1.0))
    quant = int(p.get("quant_points", 16))
    s0 = float(p["s0"])
    payoff = BermudanPayoff(parse_payoff(p["payoff"]))
    lo_model = LatticeModel(CoefficientFn.local_vol_wrap(parse_coefficient(p["sigma_lo"])), T, quant)
    hi_model = LatticeModel(CoefficientFn.local_vol_wrap(parse_coefficient(p["sigma_hi"])), T, quant)
    steps_lo, specs = lo_model.build(n_dates)
    steps_hi, _ = hi_model.build(n_dates)
    extra = tuple(payoff.functional.f.knots) if payoff.functional.f is not None and payoff.functional.f.kind == "piecewise_linear" else ()

    gp = cfg["grid_points"]
    comp = snell_compare(
        steps_lo, steps_hi, specs, payoff, s0, grid_points=gp,
        quad_nodes=cfg["quad_nodes"], extra_grid_points=extra,
    )
    comp_fine = snell_compare(
        steps_lo, steps_hi, specs, payoff, s0, grid_points=2 * gp - 1,
        quad_nodes=cfg["quad_nodes"], extra_grid_points=extra,
    )

    def _reduite(steps, bp, points):
        return snell_bdpp(
            steps, specs, bp, s0, backend="grid", grid_points=points,
            quad_nodes=cfg["quad_nodes"], extra_grid_points=extra, keep_value_functions=False,
        ).reduite_u0

    euro = payoff.european_only(n_dates)
    rows = {
        "u0": comp.u0, "v0": comp.v0,
        "u0_refined": comp_fine.u0, "v0_refined": comp_fine.v0,
        "american_lo": comp.u0, "european_lo": _reduite(steps_lo, euro, gp),
        "american_hi": comp.v0, "european_hi": _reduite(steps_hi, euro, gp),
    }

    def _sig4(a: float, b: float) -> bool:
        ref = max(abs(a), abs(b), 1e-12)
        return abs(a - b) <= 5e-4 * ref

    stable = _sig4(comp.u0, comp_fine.u0) and _sig4(comp.v0, comp_fine.v0)
    exercise_ok = (
        rows["american_lo"] >= rows["european_lo"] - 1e-10
        and rows["american_hi"] >= rows["european_hi"] - 1e-10
    )
    verdict = DOMINANCE if (comp.dominance and exercise_ok) else VIOLATION
    res = {
        "values": rows, "dominance": comp.dominance, "tolerance": comp.tolerance,
        "hypothesis": comp.hypothesis, "grid_stable_4_digits": stable,
        "american_ge_european": exercise_ok, "verdict": verdict,
        "grid_points": [gp, 2 * gp - 1], "n_dates": n_dates, "quant_points": quant,
    }
    table = (
        ["quantity", "value"],
        [[k, float(v)] for k, v in rows.items()],
    )
    return ExperimentOutcome(
        experiment="compare_bermudan",
        outcome=classify_outcome(verdict, cfg["expected"]),
        verdict=verdict, expected=cfg["expected"],
        report={"config": cfg, "bermudan": res},
        tables={"values": table},
    )


def run_refine_study(cfg: dict) -> ExperimentOutcome:
    p = cfg["params"]
    T = float(p.get("T", 1.0))
    quant = int(p.get("quant_points", 12))
    payoff = BermudanPayoff(parse_payoff(p["payoff"]))
    model = LatticeModel(CoefficientFn.local_vol_wrap(parse_coefficient(p["sigma"])), T, quant)
    extra = tuple(payoff.functional.f.knots) if payoff.functional.f is not None and payoff.functional.f.kind == "piecewise_linear" else ()
    rows = snell_refine(
        model, payoff, float(p["s0"]), p["n_list"], grid_points=cfg["grid_points"],
        quad_nodes=cfg["quad_nodes"], extra_grid_points=extra,
    )
    diffs = [r.diff_from_previous for r in rows if r.diff_from_previous is not None]
    decreasing = all(b <= a + 1e-12 for a, b in zip(diffs, diffs[1:])) if len(diffs) >= 2 else True
    table = (
        ["n", "reduite", "diff_from_previous"],
        [[r.n, r.reduite, "" if r.diff_from_previous is None else r.diff_from_previous] for r in rows],
    )
    res = {
        "rows": [{"n": r.n, "reduite": r.reduite, "diff_from_previous": r.diff_from_previous} for r in rows],
        "diffs_decreasing": decreasing,
    }
    return ExperimentOutcome(
        experiment="refine_study",
        outcome="as_expected" if decreasing else "unexpected",
        verdict=None, expected="diffs_decreasing",
        report={"config": cfg, "refine_study": res},
        tables={"reduites": table},
    )


# -- dispatcher -------------------------------------------------------------------


_RUNNERS = {
    "compare_european": run_compare_european,
    "compare_bermudan": run_compare_bermudan,
    "sandwich": run_sandwich,
    "peacock": run_peacock,
    "ito_compare": lambda cfg: _run_integral_like(cfg, "ito"),
    "doleans_compare": lambda cfg: _run_integral_like(cfg, "doleans"),
    "laplace": run_laplace,
    "cm_compare": run_cm_compare,
    "counterexample_2period": run_counterexample_2period,
    "counterexample_integrand": run_counterexample_integrand,
    "refine_study": run_refine_study,
}


def run_experiment(config: dict, out_dir: str | None = None, plot: bool | None = None) -> ExperimentOutcome:
    """Validate, dispatch, and write report/CSV (and figures) for one experiment."""
    cfg = validate_config(config)
    outcome = _RUNNERS[cfg["experiment"]](cfg)
    target = out_dir if out_dir is not None else cfg.get("out")
    if target:
        written = write_outcome_files(outcome, target)
        do_plot = cfg["plot"] if plot is None else plot
        if do_plot:
            from .figures import render_figures

            written += render_figures(outcome, target)
        log.info("wrote %s", ", ".join(os.path.basename(w) for w in written))
    return outcome


def experiment_config(experiment: str, override: dict | None = None) -> dict:
    """Default config for an experiment id, deep-merged with an override."""
    cfg = default_config(experiment)
    if override:
        cfg = merge_config(cfg, override)
    return cfg
