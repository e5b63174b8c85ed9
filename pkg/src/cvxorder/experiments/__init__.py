"""Monte-Carlo experiment harness: paired dominance tests, named experiments,
counterexample reproductions, JSON/CSV/figure reporting and the CLI."""

from .reports import ComparisonReport, make_report
from .runners import run_experiment

__all__ = ["ComparisonReport", "make_report", "run_experiment"]
