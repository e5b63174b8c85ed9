"""Comparison reports and deterministic file output.

Verdicts are one-sided statistical calls on common-random-number paired
differences: with ``diff = lhs - rhs`` per path and dominance meaning
``E lhs <= E rhs``, the verdict is ``dominance_confirmed`` when the paired
mean does not exceed ``z`` paired standard errors (plus any exact-backend
budget), ``violation_detected`` when it does, and ``inconclusive`` on
degenerate inputs.  Reports carry their full tolerance budget and serialize
byte-identically for identical configs and seeds.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

REPORT_VERSION = 1

DOMINANCE = "dominance_confirmed"
VIOLATION = "violation_detected"
INCONCLUSIVE = "inconclusive"


@dataclass
class ComparisonReport:
    label: str
    estimate_lhs: float
    estimate_rhs: float
    se_lhs: float
    se_rhs: float
    paired_diff_mean: float
    paired_diff_se: float
    n_paths: int
    seed: int
    verdict: str
    tolerance: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    m = float(np.mean(x))
    if x.size < 2:
        return m, math.inf
    return m, float(np.std(x, ddof=1) / math.sqrt(x.size))


def make_report(
    label: str,
    lhs: np.ndarray,
    rhs: np.ndarray,
    seed: int,
    z: float = 3.0,
    exact_budget: float = 0.0,
    extra: dict | None = None,
) -> ComparisonReport:
    """Paired CRN comparison with dominance meaning E lhs <= E rhs."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    el, sl = _mean_se(lhs)
    er, sr = _mean_se(rhs)
    diff = lhs - rhs
    dm, ds = _mean_se(diff)
    if not (math.isfinite(el) and math.isfinite(er) and math.isfinite(dm)) or lhs.size < 2:
        verdict = INCONCLUSIVE
    elif dm <= z * ds + exact_budget:
        verdict = DOMINANCE
    else:
        verdict = VIOLATION
    return ComparisonReport(
        label=label,
        estimate_lhs=el, estimate_rhs=er, se_lhs=sl, se_rhs=sr,
        paired_diff_mean=dm, paired_diff_se=ds,
        n_paths=int(lhs.size), seed=int(seed), verdict=verdict,
        tolerance={"z": z, "exact_budget": exact_budget},
        extra=extra or {},
    )


@dataclass
class ExperimentOutcome:
    """Result bundle of one experiment run."""

    experiment: str
    outcome: str  # "as_expected" | "unexpected" | "inconclusive"
    verdict: str | None
    expected: str
    report: dict
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if self.outcome == "as_expected":
            return 0
        if self.outcome == "inconclusive":
            return 3
        return 2

    def report_json(self) -> str:
        doc = {
            "report_version": REPORT_VERSION,
            "experiment": self.experiment,
            "outcome": self.outcome,
            "verdict": self.verdict,
            "expected": self.expected,
        }
        doc.update(self.report)
        return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n"


def classify_outcome(verdict: str, expected: str) -> str:
    if verdict == INCONCLUSIVE:
        return "inconclusive"
    if expected == "any" or verdict == expected:
        return "as_expected"
    return "unexpected"


def atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_outcome_files(outcome: ExperimentOutcome, out_dir: str, stem: str | None = None) -> list[str]:
    """Write <stem>_report.json plus one CSV per table; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    stem = stem or outcome.experiment
    written = []
    path = os.path.join(out_dir, f"{stem}_report.json")
    atomic_write_text(path, outcome.report_json())
    written.append(path)
    for name, (header, rows) in outcome.tables.items():
        path = os.path.join(out_dir, f"{stem}_{name}.csv")
        write_csv(path, header, rows)
        written.append(path)
    return written
