"""Convex path functionals and Bermudan obstacle families.

Every built-in kind is sup-norm continuous; convexity is derived from the
composition rules (affine-then-convex for weighted averages, monotone-convex
for running extrema) and can always be re-checked with ``convexity_probe``.
The digital kind is deliberately non-convex and exists as a negative control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .convexfns import ScalarConvexFn
from .dynamics import Path
from .errors import GridMismatch, IndexOutOfRange
from .rng import RngStream


@dataclass(frozen=True)
class PayoffFunctional:
    """Path functional F with convexity/growth certificates.

    Kinds
    -----
    terminal      f(x_n)
    integral      f(sum_k w_k x_k); weights "uniform" means 1/(n+1) each
    running_max   f(max_k x_k); convex requires f convex non-decreasing
    running_min   f(min_k x_k); convex requires f convex non-increasing
    composite     sum of non-negative multiples of convex functionals
    digital       indicator {x_n >= strike}; non-convex negative control
    """

    kind: str
    f: ScalarConvexFn | None = None
    weights: tuple[float, ...] | str | None = None
    components: tuple[tuple[float, "PayoffFunctional"], ...] | None = None
    strike: float | None = None
    convex: bool = True
    growth_r: float = 1.0

    # -- factories ---------------------------------------------------------

    @staticmethod
    def terminal(f: ScalarConvexFn) -> "PayoffFunctional":
        return PayoffFunctional("terminal", f=f, growth_r=f.growth_r)

    @staticmethod
    def integral(f: ScalarConvexFn, weights: Sequence[float] | str = "uniform") -> "PayoffFunctional":
        if isinstance(weights, str):
            if weights != "uniform":
                raise ValueError("weights must be a sequence or 'uniform'")
            w: tuple[float, ...] | str = "uniform"
        else:
            w = tuple(float(v) for v in weights)
        return PayoffFunctional("integral", f=f, weights=w, growth_r=f.growth_r)

    @staticmethod
    def running_max(f: ScalarConvexFn) -> "PayoffFunctional":
        return PayoffFunctional(
            "running_max", f=f, convex=f.monotone == "nondecreasing", growth_r=f.growth_r
        )

    @staticmethod
    def running_min(f: ScalarConvexFn) -> "PayoffFunctional":
        return PayoffFunctional(
            "running_min", f=f, convex=f.monotone == "nonincreasing", growth_r=f.growth_r
        )

    @staticmethod
    def composite(parts: Sequence[tuple[float, "PayoffFunctional"]]) -> "PayoffFunctional":
        parts = tuple((float(c), p) for c, p in parts)
        if not parts:
            raise ValueError("composite needs at least one component")
        if any(c < 0 for c, _ in parts):
            raise ValueError("composite coefficients must be non-negative")
        convex = all(p.convex for _, p in parts)
        return PayoffFunctional(
            "composite", components=parts, convex=convex,
            growth_r=max(p.growth_r for _, p in parts),
        )

    @staticmethod
    def digital(strike: float) -> "PayoffFunctional":
        return PayoffFunctional("digital", strike=float(strike), convex=False, growth_r=1.0)

    # -- evaluation ----------------------------------------------------------

    def resolve_weights(self, n_nodes: int) -> np.ndarray:
        if self.kind != "integral":
            raise ValueError("weights only apply to the integral kind")
        if self.weights == "uniform":
            return np.full(n_nodes, 1.0 / n_nodes)
        w = np.asarray(self.weights, dtype=float)
        if w.size != n_nodes:
            raise GridMismatch(f"payoff carries {w.size} weights but the path has {n_nodes} nodes")
        return w

    def eval_values(self, values: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on a (n_paths, n+1) block of grid values."""
        v = np.atleast_2d(np.asarray(values, dtype=float))
        if self.kind == "terminal":
            return np.asarray(self.f(v[:, -1]), dtype=float)
        if self.kind == "integral":
            w = self.resolve_weights(v.shape[1])
            return np.asarray(self.f(v @ w), dtype=float)
        if self.kind == "running_max":
            return np.asarray(self.f(v.max(axis=1)), dtype=float)
        if self.kind == "running_min":
            return np.asarray(self.f(v.min(axis=1)), dtype=float)
        if self.kind == "digital":
            return (v[:, -1] >= self.strike).astype(float)
        out = np.zeros(v.shape[0])
        for c, part in self.components:
            out = out + c * part.eval_values(v)
        return out

    # -- state reduction -----------------------------------------------------

    def reduction(self) -> str | None:
        """Identifier of the low-dimensional running state, if any."""
        if self.kind in ("terminal", "digital"):
            return "terminal"
        if self.kind == "integral":
            return "weighted_sum"
        if self.kind in ("running_max", "running_min"):
            return self.kind
        return None

    def terminal_from_state(self, x: np.ndarray, aux: np.ndarray | None = None) -> np.ndarray:
        """Payoff at maturity given the reduced state (x [, running aux])."""
        if self.kind == "terminal":
            return np.asarray(self.f(x), dtype=float)
        if self.kind == "digital":
            return (np.asarray(x) >= self.strike).astype(float)
        if self.kind == "integral":
            return np.asarray(self.f(aux), dtype=float)
        return np.asarray(self.f(aux), dtype=float)

    def stopped_from_state(
        self, k: int, n: int, x: np.ndarray, aux: np.ndarray | None = None
    ) -> np.ndarray:
        """Payoff of the path frozen after step k, from the reduced state."""
        if self.kind == "terminal":
            return np.asarray(self.f(x), dtype=float)
        if self.kind == "digital":
            return (np.asarray(x) >= self.strike).astype(float)
        if self.kind == "integral":
            w = self.resolve_weights(n + 1)
            tail = float(np.sum(w[k + 1 :]))
            return np.asarray(self.f(aux + tail * np.asarray(x)), dtype=float)
        return np.asarray(self.f(aux), dtype=float)


def eval_payoff(F: PayoffFunctional, path: Path) -> float:
    """Functional value on one path."""
    return float(F.eval_values(path.values[None, :])[0])


def freeze_after(values: np.ndarray, k: int) -> np.ndarray:
    """Stop rule: values after index k are pinned at the value at k."""
    v = np.asarray(values, dtype=float).copy()
    if v.ndim == 1:
        v[k + 1 :] = v[k]
    else:
        v[:, k + 1 :] = v[:, [k]]
    return v


@dataclass(frozen=True)
class BermudanPayoff:
    """Per-date obstacles F_k realized as one functional on the stopped path.

    ``exercisable`` masks dates (a non-exercisable date contributes obstacle
    0).  ``date_scales`` multiplies the obstacle at date k by a non-negative
    factor c_k; a decreasing schedule makes early exercise genuinely valuable,
    which time-homogeneous convex obstacles on martingales never are (the
    stopped payoff is then a submartingale by conditional Jensen).  Obstacles
    must be non-negative, so the functional's infimum is checked at
    construction.
    """

    functional: PayoffFunctional
    exercisable: tuple[bool, ...] | None = None
    date_scales: tuple[float, ...] | None = None

    def __post_init__(self):
        inf = _functional_infimum(self.functional)
        if inf < -1e-12:
            raise ValueError(f"Bermudan obstacles must be non-negative (infimum {inf:.3e})")
        if self.date_scales is not None and any(c < 0 for c in self.date_scales):
            raise ValueError("date_scales must be non-negative")

    def can_exercise(self, k: int, n: int) -> bool:
        if self.exercisable is None:
            return True
        if len(self.exercisable) != n + 1:
            raise GridMismatch("exercisable mask length must equal n + 1")
        return bool(self.exercisable[k])

    def scale(self, k: int, n: int) -> float:
        if self.date_scales is None:
            return 1.0
        if len(self.date_scales) != n + 1:
            raise GridMismatch("date_scales length must equal n + 1")
        return float(self.date_scales[k])

    def european_only(self, n: int) -> "BermudanPayoff":
        mask = tuple(k == n for k in range(n + 1))
        return BermudanPayoff(self.functional, exercisable=mask, date_scales=self.date_scales)

    def obstacle_values(self, values: np.ndarray, k: int) -> np.ndarray:
        v = np.atleast_2d(values)
        n = v.shape[1] - 1
        if not 0 <= k <= n:
            raise IndexOutOfRange(f"stopping index {k} outside 0..{n}")
        if not self.can_exercise(k, n):
            return np.zeros(v.shape[0])
        return self.scale(k, n) * self.functional.eval_values(freeze_after(v, k))

    def obstacle_from_state(
        self, k: int, n: int, x: np.ndarray, aux: np.ndarray | None = None
    ) -> np.ndarray:
        """Obstacle at date k from the reduced state, for grid inductions."""
        if not self.can_exercise(k, n):
            return np.zeros(np.shape(x))
        return self.scale(k, n) * self.functional.stopped_from_state(k, n, x, aux)


def eval_stopped(payoff: BermudanPayoff, path: Path, k: int) -> float:
    """Obstacle F_k on the path frozen after index k."""
    return float(payoff.obstacle_values(path.values[None, :], k)[0])


def _functional_infimum(F: PayoffFunctional) -> float:
    if F.kind == "digital":
        return 0.0
    if F.kind == "composite":
        return sum(c * _functional_infimum(p) for c, p in F.components)
    if F.f is None:
        return -math.inf
    return F.f.minimum()


@dataclass(frozen=True)
class ConvexityProbeReport:
    n_trials: int
    max_violation: float
    convex_declared: bool

    @property
    def consistent(self) -> bool:
        return (self.max_violation <= 1e-12) == self.convex_declared


def convexity_probe(
    F: PayoffFunctional,
    n_trials: int,
    stream: RngStream,
    n_steps: int = 16,
    scale: float = 1.0,
    base: float = 0.0,
) -> ConvexityProbeReport:
    """Random-pair convexity certificate.

    Draws path pairs (alpha, beta) and lambda in (0,1) and reports the largest
    violation of F(lambda a + (1-lambda) b) <= lambda F(a) + (1-lambda) F(b).
    """
    gen = stream.gen
    cols = n_steps + 1
    a = base + scale * np.cumsum(gen.standard_normal((n_trials, cols)), axis=1)
    b = base + scale * np.cumsum(gen.standard_normal((n_trials, cols)), axis=1)
    lam = gen.random((n_trials, 1))
    mix = lam * a + (1.0 - lam) * b
    viol = F.eval_values(mix) - (lam[:, 0] * F.eval_values(a) + (1.0 - lam[:, 0]) * F.eval_values(b))
    return ConvexityProbeReport(
        n_trials=n_trials, max_violation=float(np.max(viol)), convex_declared=F.convex
    )


def growth_check(F: PayoffFunctional, paths: np.ndarray, C: float) -> bool:
    """|F(alpha)| <= C (1 + ||alpha||_sup^r) on the given probe block."""
    v = np.atleast_2d(paths)
    vals = np.abs(F.eval_values(v))
    bound = C * (1.0 + np.max(np.abs(v), axis=1) ** F.growth_r)
    return bool(np.all(vals <= bound + 1e-9))
