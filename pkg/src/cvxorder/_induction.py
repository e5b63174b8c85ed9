"""Grid backward-induction engine.

One engine serves the European value recursions and the Bermudan dynamic
programming principle: the Bermudan case simply takes a max with the obstacle
at every step.  Value functions live on piecewise-linear state grids (1-d for
terminal payoffs, 2-d with a running aggregate for weighted-sum and running
extremum payoffs); the reported error budget is the standard
second-difference bound on piecewise-linear interpolation, accumulated over
steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .coeffs import StepFn
from .convexfns import hermite_nodes
from .errors import BackendUnavailable, NotFiniteSupport
from .noise import InnovationSpec
from .payoffs import BermudanPayoff, PayoffFunctional
from .valuefn import ValueFunction, interp_chord, make_state_grid


def transition_nodes(spec: InnovationSpec, quad_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Integration nodes/weights of one innovation law."""
    if spec.kind == "finite_support":
        return spec.atoms()
    if spec.kind == "gaussian":
        z, w = hermite_nodes(quad_nodes)
        return z * math.sqrt(spec.variance), w
    raise NotFiniteSupport("quantize Levy increments before grid induction")


def reach_half_width(
    steps: Sequence[StepFn], specs: Sequence[InnovationSpec], x0: float, span: float = 8.0
) -> float:
    """Half-width covering x0 +- span * (total std of the dynamics).

    The per-step scale is probed over a one-total-std neighbourhood (two
    passes), so state-dependent coefficients widen the grid without the probe
    range compounding on itself.
    """
    width = 1.0
    for _ in range(2):
        probe = np.linspace(x0 - width, x0 + width, 65)
        var = 0.0
        for step, spec in zip(steps, specs):
            smax = float(np.max(np.abs(step(probe))))
            var += (smax**2) * spec.var()
        width = max(math.sqrt(var), 1e-8)
    return span * width


def _interp2(
    xg: np.ndarray, ag: np.ndarray, V: np.ndarray, xq: np.ndarray, aq: np.ndarray
) -> np.ndarray:
    """Bilinear interpolation with edge-cell linear extrapolation."""
    i = np.clip(np.searchsorted(xg, xq) - 1, 0, xg.size - 2)
    j = np.clip(np.searchsorted(ag, aq) - 1, 0, ag.size - 2)
    tx = (xq - xg[i]) / (xg[i + 1] - xg[i])
    ta = (aq - ag[j]) / (ag[j + 1] - ag[j])
    return (
        (1 - tx) * (1 - ta) * V[i, j]
        + tx * (1 - ta) * V[i + 1, j]
        + (1 - tx) * ta * V[i, j + 1]
        + tx * ta * V[i + 1, j + 1]
    )


def _curvature_budget(grid: np.ndarray, values: np.ndarray) -> float:
    """Piecewise-linear interpolation error bound h^2 |V''| / 8 via divided differences."""
    h = np.diff(grid)
    slopes = np.diff(values) / h
    if slopes.size < 2:
        return 0.0
    dd2 = 2.0 * np.diff(slopes) / (h[1:] + h[:-1])
    hmax = np.maximum(h[1:], h[:-1])
    return float(np.max(np.abs(dd2) * hmax**2 / 8.0))


@dataclass
class InductionResult:
    value0: float
    budget: float
    min_convexity_defect: float
    xgrid: np.ndarray
    aux_grid: np.ndarray | None = None
    value_functions: list[ValueFunction] | None = None
    continuations: list[np.ndarray] | None = None
    obstacles: list[np.ndarray] | None = None
    exercise_regions: list[np.ndarray] | None = None


def grid_induction(
    steps: Sequence[StepFn],
    specs: Sequence[InnovationSpec],
    payoff: PayoffFunctional,
    x0: float,
    bermudan: BermudanPayoff | None = None,
    grid_points: int = 513,
    aux_points: int = 129,
    quad_nodes: int = 64,
    extra_grid_points: tuple[float, ...] = (),
    span: float = 8.0,
    keep_value_functions: bool = False,
    tie_tol: float = 1e-12,
) -> InductionResult:
    """Backward induction of the value recursion on a state grid.

    Without ``bermudan`` this computes E F(X_{0:n}) for the state-reducible
    functional ``payoff``; with it, the reduite of the obstacle family.
    """
    n = len(steps)
    if len(specs) != n:
        raise ValueError("steps and specs must have equal length")
    reduction = payoff.reduction()
    if reduction is None:
        raise BackendUnavailable(f"payoff kind {payoff.kind!r} is not state-reducible")

    extras = list(extra_grid_points)
    if payoff.f is not None and payoff.f.kind == "piecewise_linear":
        extras.extend(payoff.f.knots)
    half = reach_half_width(steps, specs, x0, span=span)
    xs = make_state_grid(x0, half, grid_points, extra=tuple(extras))
    nodes = [transition_nodes(spec, quad_nodes) for spec in specs]

    if reduction == "terminal":
        return _induct_1d(steps, nodes, payoff, bermudan, x0, xs, n, keep_value_functions, tie_tol)
    return _induct_2d(
        steps, nodes, payoff, bermudan, x0, xs, n, reduction, aux_points, tie_tol
    )


def _induct_1d(steps, nodes, payoff, bermudan, x0, xs, n, keep_vfs, tie_tol) -> InductionResult:
    def obstacle(k: int) -> np.ndarray | None:
        if bermudan is None:
            return None
        return bermudan.obstacle_from_state(k, n, xs)

    V = payoff.terminal_from_state(xs) if bermudan is None else obstacle(n)
    budget = 0.0
    defect = _convexity_defect(xs, V)
    vfs = [ValueFunction(xs, V.copy())] if keep_vfs else None
    conts: list[np.ndarray] | None = [] if bermudan is not None else None
    obss: list[np.ndarray] | None = [] if bermudan is not None else None
    exers: list[np.ndarray] | None = [] if bermudan is not None else None

    for k in range(n - 1, -1, -1):
        z, w = nodes[k]
        u = steps[k](xs)
        xq = xs[:, None] + u[:, None] * z[None, :]
        cont = interp_chord(xs, V, xq.ravel()).reshape(xq.shape) @ w
        if bermudan is None:
            V = cont
        else:
            obs = obstacle(k)
            V = np.maximum(obs, cont)
            conts.insert(0, cont)
            obss.insert(0, obs)
            exers.insert(0, obs >= cont - tie_tol)
        budget += _curvature_budget(xs, V)
        defect = min(defect, _convexity_defect(xs, V))
        if keep_vfs:
            vfs.insert(0, ValueFunction(xs, V.copy()))

    value0 = float(interp_chord(xs, V, np.array([x0]))[0])
    return InductionResult(
        value0=value0, budget=budget, min_convexity_defect=defect, xgrid=xs,
        value_functions=vfs, continuations=conts, obstacles=obss, exercise_regions=exers,
    )


def _induct_2d(steps, nodes, payoff, bermudan, x0, xs, n, reduction, aux_points, tie_tol) -> InductionResult:
    if reduction == "weighted_sum":
        w_all = payoff.resolve_weights(n + 1)
        pos = np.maximum(w_all, 0.0)
        neg = np.minimum(w_all, 0.0)
        a_lo = float(pos.sum() * xs[0] + neg.sum() * xs[-1])
        a_hi = float(pos.sum() * xs[-1] + neg.sum() * xs[0])
        if a_hi - a_lo < 1e-12:
            a_lo, a_hi = a_lo - 1.0, a_hi + 1.0
        aux = np.linspace(a_lo, a_hi, aux_points)
        extras = [w_all[0] * x0]
        if payoff.f is not None and payoff.f.kind == "piecewise_linear":
            extras.extend(k for k in payoff.f.knots if a_lo < k < a_hi)
        aux = np.union1d(aux, np.asarray(extras))
        a0 = w_all[0] * x0
    elif reduction == "running_max":
        aux = xs[xs >= x0 - 1e-12]
        if aux.size < 2:
            aux = xs[-2:]
        a0 = x0
    else:  # running_min
        aux = xs[xs <= x0 + 1e-12]
        if aux.size < 2:
            aux = xs[:2]
        a0 = x0

    X = xs[:, None]
    A = aux[None, :]
    if bermudan is None:
        V = np.broadcast_to(
            payoff.terminal_from_state(np.broadcast_to(X, (xs.size, aux.size)), np.broadcast_to(A, (xs.size, aux.size))),
            (xs.size, aux.size),
        ).copy()
    else:
        V = _obstacle_2d(bermudan, payoff, n, n, xs, aux)

    budget = 0.0
    defect = 0.0
    for k in range(n - 1, -1, -1):
        z, wq = nodes[k]
        u = steps[k](xs)
        xn = xs[:, None] + u[:, None] * z[None, :]  # (nx, nq)
        V_new = np.zeros((xs.size, aux.size))
        for q in range(z.size):
            xq = np.broadcast_to(xn[:, q : q + 1], (xs.size, aux.size))
            if reduction == "weighted_sum":
                aq = A + w_all[k + 1] * xn[:, q : q + 1]
            elif reduction == "running_max":
                aq = np.maximum(A, xn[:, q : q + 1])
            else:
                aq = np.minimum(A, xn[:, q : q + 1])
            aq = np.broadcast_to(aq, (xs.size, aux.size))
            V_new += wq[q] * _interp2(xs, aux, V, xq, aq)
        if bermudan is None:
            V = V_new
        else:
            V = np.maximum(_obstacle_2d(bermudan, payoff, k, n, xs, aux), V_new)
        budget += max(
            max(_curvature_budget(xs, V[:, j]) for j in range(0, aux.size, max(1, aux.size // 8))),
            max(_curvature_budget(aux, V[i, :]) for i in range(0, xs.size, max(1, xs.size // 8))),
        )
        defect = min(defect, min(_convexity_defect(xs, V[:, j]) for j in range(0, aux.size, max(1, aux.size // 8))))

    value0 = float(_interp2(xs, aux, V, np.array([x0]), np.array([a0]))[0])
    return InductionResult(
        value0=value0, budget=budget, min_convexity_defect=defect, xgrid=xs, aux_grid=aux
    )


def _obstacle_2d(bermudan, payoff, k, n, xs, aux) -> np.ndarray:
    X = np.broadcast_to(xs[:, None], (xs.size, aux.size))
    A = np.broadcast_to(aux[None, :], (xs.size, aux.size))
    return np.asarray(bermudan.obstacle_from_state(k, n, X, A), dtype=float)


def _convexity_defect(grid: np.ndarray, values: np.ndarray) -> float:
    s = np.diff(values) / np.diff(grid)
    return float(np.min(np.diff(s))) if s.size >= 2 else 0.0
