"""Command-line interface.

Each subcommand runs one experiment from its built-in default configuration,
optionally deep-merged with ``--config FILE``.  Outputs (JSON report, CSV
tables, PNG figure) land in ``--out DIR``.  Exit codes: 0 when the outcome
matches expectations, 2 on an unexpected violation, 3 when inconclusive.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from ..errors import CvxOrderError
from .config import EXPERIMENTS, load_config, merge_config, validate_config
from .runners import experiment_config, run_experiment

_SUBCOMMANDS = {
    "compare-european": "compare_european",
    "compare-bermudan": "compare_bermudan",
    "sandwich": "sandwich",
    "peacock": "peacock",
    "ito-compare": "ito_compare",
    "doleans-compare": "doleans_compare",
    "laplace": "laplace",
    "cm-compare": "cm_compare",
    "counterexample-2period": "counterexample_2period",
    "counterexample-integrand": "counterexample_integrand",
    "refine-study": "refine_study",
}

_HELP = {
    "compare-european": "paired CRN dominance test between two martingale models",
    "compare-bermudan": "Bermudan reduite comparison on a quantized lattice",
    "sandwich": "bracket a local-vol price by two Black-Scholes values",
    "peacock": "volatility scan of a convex payoff (monotone in convex order)",
    "ito-compare": "discrete stochastic-integral comparison |H| <= h or H >= h >= 0",
    "doleans-compare": "the same comparison on geometric (Doleans) schemes",
    "laplace": "exact Laplace-transform recursion dominance with MC cross-check",
    "cm-compare": "completely-monotone mixture comparison of integrand pairs",
    "counterexample-2period": "non-convex volatility bump breaks monotonicity",
    "counterexample-integrand": "stochastic dominating integrand reverses ordering",
    "refine-study": "reduite vs number of exercise dates",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvxorder",
        description="Convex-order comparison experiments for martingale dynamics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, exp_id in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=_HELP[name])
        p.set_defaults(experiment=exp_id)
        p.add_argument("--config", metavar="PATH", help="JSON config deep-merged over the defaults")
        p.add_argument("--seed", type=int, metavar="U64", help="global seed")
        p.add_argument("--paths", type=int, metavar="N", help="Monte-Carlo path count")
        p.add_argument(
            "--threads", type=int, metavar="N",
            default=int(os.environ.get("CVXORDER_THREADS", "0")) or None,
            help="worker threads (default: env CVXORDER_THREADS or 1)",
        )
        p.add_argument("--out", metavar="DIR", default="cvxorder_out", help="output directory")
        p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
        p.add_argument("--trace", action="store_true", help="verbose recursion/run tracing")
        p.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.trace else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = experiment_config(args.experiment)
        if args.config:
            cfg = merge_config(cfg, load_config(args.config))
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.paths is not None:
            cfg["n_paths"] = args.paths
        if args.threads is not None:
            cfg["threads"] = args.threads
        if args.no_plot:
            cfg["plot"] = False
        if args.trace:
            cfg["trace"] = True

        if args.dump_config:
            import json

            print(json.dumps(validate_config(cfg), sort_keys=True, indent=2))
            return 0

        outcome = run_experiment(cfg, out_dir=args.out)
    except CvxOrderError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    summary = outcome.verdict or outcome.expected
    print(f"{outcome.experiment}: {outcome.outcome} ({summary}); reports in {args.out}/")
    return outcome.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
