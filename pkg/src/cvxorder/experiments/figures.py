"""Figure rendering for experiment reports.

One PNG per run, written next to the CSV tables.  Figures are a reading aid
for the report; every number they show is also in the JSON/CSV output.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .reports import ExperimentOutcome


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, f"{name}.png")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def _fig_sandwich(outcome: ExperimentOutcome, out_dir: str) -> list[str]:
    res = outcome.report["sandwich"]
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = ["BS(sigma_min)", "MC local vol", "BS(sigma_max)"]
    vals = [res["bs_lower"], res["mc_value"], res["bs_upper"]]
    errs = [0.0, 3.0 * res["mc_se"] + res["delta_n"], 0.0]
    ax.errorbar(labels, vals, yerr=errs, fmt="o", capsize=5)
    ax.axhspan(res["bs_lower"], res["bs_upper"], alpha=0.15)
    ax.set_ylabel("value")
    ax.set_title(f"Black-Scholes sandwich ({res['verdict']})")
    return [_save(fig, out_dir, outcome.experiment)]


def _fig_comparison(outcome: ExperimentOutcome, out_dir: str) -> list[str]:
    rep = outcome.report["comparison"]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.bar(["lhs", "rhs"], [rep["estimate_lhs"], rep["estimate_rhs"]],
           yerr=[3 * rep["se_lhs"], 3 * rep["se_rhs"]], capsize=6, width=0.5)
    ax.set_title(f"{rep['label']}: diff {rep['paired_diff_mean']:.3e} "
                 f"(+-{3 * rep['paired_diff_se']:.1e}), {rep['verdict']}")
    ax.set_ylabel("estimate")
    return [_save(fig, out_dir, outcome.experiment)]


def _fig_peacock(outcome: ExperimentOutcome, out_dir: str) -> list[str]:
    res = outcome.report["peacock"]
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [r["sigma"] for r in res["levels"]]
    ys = [r["estimate"] for r in res["levels"]]
    es = [3 * r["se"] for r in res["levels"]]
    ax.errorbar(xs, ys, yerr=es, fmt="o-", capsize=4)
    ax.set_xlabel("sigma")
    ax.set_ylabel("payoff estimate")
    ax.set_title(f"volatility scan ({res['verdict']})")
    return [_save(fig, out_dir, outcome.experiment)]


def _fig_lambda_rows(outcome: ExperimentOutcome, out_dir: str) -> list[str]:
    if outcome.experiment == "laplace":
        rows = outcome.report["rows"]
        lo = [r["value_lo"] for r in rows]
        hi = [r["value_hi"] for r in rows]
        lams = [r["lambda"] for r in rows]
    else:
        rows = outcome.report["cm_compare"]["per_lambda"]
        lo = [r["estimate_lhs"] for r in rows]
        hi = [r["estimate_rhs"] for r in rows]
        lams = [r["lambda"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(lams, lo, "o-", label="lower side")
    ax.plot(lams, hi, "s-", label="upper side")
    ax.set_yscale("log")
    ax.set_xlabel("lambda")
    ax.set_ylabel("E exp(lambda X)")
    ax.legend()
    ax.set_title(outcome.experiment)
    return [_save(fig, out_dir, outcome.experiment)]


def _fig_curve(outcome: ExperimentOutcome, out_dir: str) -> list[str]:
    res = outcome.report["counterexample"]
    curve = res.get("curve") or res.get("scan_curve")
    xs = [p[0] for p in curve]
    ys = [p[1] for p in curve]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, "o-")
    ax.set_xlabel("sigma")
    ax.set_ylabel("phi(sigma)")
    marker = res.get("decreasing_until_sigma", res.get("sigma0"))
    if marker is not None:
        ax.axvline(marker, linestyle="--", alpha=0.6)
    ax.set_title(f"{outcome.experiment} (reproduced: {res['reproduced']})")
    return [_save(fig, out_dir, outcome.experiment)]


def _fig_refine(outcome: ExperimentOutcome, out_dir: str) -> list[str]:
    rows = outcome.report["refine_study"]["rows"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ns = [r["n"] for r in rows]
    ax1.plot(ns, [r["reduite"] for r in rows], "o-")
    ax1.set_xscale("log", base=2)
    ax1.set_xlabel("n (exercise dates)")
    ax1.set_ylabel("reduite")
    dn = [r["n"] for r in rows if r["diff_from_previous"] is not None]
    dv = [r["diff_from_previous"] for r in rows if r["diff_from_previous"] is not None]
    ax2.plot(dn, dv, "s-")
    ax2.set_xscale("log", base=2)
    ax2.set_yscale("log")
    ax2.set_xlabel("n")
    ax2.set_ylabel("|u0(n) - u0(previous)|")
    fig.suptitle("reduite refinement study")
    return [_save(fig, out_dir, outcome.experiment)]


def _fig_bermudan(outcome: ExperimentOutcome, out_dir: str) -> list[str]:
    vals = outcome.report["bermudan"]["values"]
    fig, ax = plt.subplots(figsize=(7, 4))
    keys = ["european_lo", "american_lo", "european_hi", "american_hi"]
    ax.bar(keys, [vals[k] for k in keys], width=0.6)
    ax.set_ylabel("value")
    ax.set_title(f"Bermudan reduites: u0={vals['u0']:.5g} <= v0={vals['v0']:.5g}")
    ax.tick_params(axis="x", rotation=20)
    return [_save(fig, out_dir, outcome.experiment)]


_RENDERERS = {
    "sandwich": _fig_sandwich,
    "compare_european": _fig_comparison,
    "ito_compare": _fig_comparison,
    "doleans_compare": _fig_comparison,
    "peacock": _fig_peacock,
    "laplace": _fig_lambda_rows,
    "cm_compare": _fig_lambda_rows,
    "counterexample_2period": _fig_curve,
    "counterexample_integrand": _fig_curve,
    "refine_study": _fig_refine,
    "compare_bermudan": _fig_bermudan,
}


def render_figures(outcome: ExperimentOutcome, out_dir: str) -> list[str]:
    renderer = _RENDERERS.get(outcome.experiment)
    if renderer is None:
        return []
    return renderer(outcome, out_dir)
