"""Snell envelopes and reduites for Bermudan obstacle families.

The backward dynamic programming principle u_n = F_n,
u_k = max(F_k, continuation) runs either on an exact enumeration tree
(short horizons, atomic innovations) or on the shared grid engine.  Comparison
of reduites reuses the same hypothesis certificates as the European recursion;
grid-refinement studies stand in for the continuous-time limit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._exactpl import PLFunction, from_scalar_fn, mixture_shift, pl_max
from ._induction import grid_induction
from .coeffs import CoefficientFn, StepFn
from .errors import BackendUnavailable
from .noise import InnovationSpec, quantize_gaussian
from .operators import certify_hypothesis, reach_half_width
from .payoffs import BermudanPayoff
from .valuefn import ValueFunction


@dataclass
class SnellResult:
    reduite_u0: float
    value_functions: list[ValueFunction] | None
    exercise_regions: list[np.ndarray] | None
    xgrid: np.ndarray | None
    backend: str
    diagnostics: dict = field(default_factory=dict)

    def exercise_boundary_rows(self) -> list[tuple[int, float]]:
        """(k, smallest grid state where exercise is optimal) per step, for CSV export."""
        rows: list[tuple[int, float]] = []
        if self.exercise_regions is None or self.xgrid is None:
            return rows
        for k, region in enumerate(self.exercise_regions):
            idx = np.nonzero(region)[0]
            if idx.size:
                rows.append((k, float(self.xgrid[idx[0]])))
        return rows

    def boundary_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "boundary_x"])
            for k, b in self.exercise_boundary_rows():
                writer.writerow([k, repr(b)])


def exhaustive_tree_reduite(
    sigmas: Sequence[StepFn],
    specs: Sequence[InnovationSpec],
    payoff: BermudanPayoff,
    x0: float,
) -> float:
    """Exact reduite by full tree enumeration (oracle for short horizons)."""
    n = len(sigmas)
    atoms = [spec.atoms() for spec in specs]

    def padded(prefix: tuple[float, ...]) -> np.ndarray:
        k = len(prefix) - 1
        return np.array(prefix + (prefix[-1],) * (n - k))

    def value(prefix: tuple[float, ...]) -> float:
        k = len(prefix) - 1
        obstacle = float(payoff.obstacle_values(padded(prefix)[None, :], k)[0])
        if k == n:
            return obstacle
        u = float(sigmas[k](prefix[-1]))
        z, p = atoms[k]
        cont = sum(pj * value(prefix + (prefix[-1] + u * zj,)) for zj, pj in zip(z, p))
        return max(obstacle, float(cont))

    return value((float(x0),))


def _constant_value(step: StepFn) -> float | None:
    """Constant value of a step coefficient, or None if state-dependent."""
    v = step(np.array([-7.3, 0.0, 11.9]))
    return float(v[0]) if float(np.max(v) - np.min(v)) == 0.0 else None


def _exact_pl_backend(
    sigmas: Sequence[StepFn], specs: Sequence[InnovationSpec], payoff: BermudanPayoff, x0: float
) -> SnellResult:
    """Breakpoint-exact lattice BDPP (constant steps, atomic innovations, PL payoff)."""
    n = len(sigmas)
    consts = [_constant_value(s) for s in sigmas]
    if any(c is None for c in consts):
        raise BackendUnavailable("exact_pl backend needs constant step coefficients")
    f = payoff.functional.f
    if payoff.functional.kind != "terminal" or f is None or f.kind != "piecewise_linear":
        raise BackendUnavailable("exact_pl backend needs a terminal piecewise-linear payoff")

    def obstacle(k: int) -> PLFunction | None:
        if not payoff.can_exercise(k, n):
            return None
        return from_scalar_fn(f, payoff.scale(k, n))

    obs_n = obstacle(n)
    V = obs_n if obs_n is not None else PLFunction(np.array([0.0]), np.array([0.0]), 0.0, 0.0)
    vfs = [V]
    for k in range(n - 1, -1, -1):
        z, p = specs[k].atoms()
        cont = mixture_shift(V, consts[k], z, p)
        obs = obstacle(k)
        V = cont if obs is None else pl_max(obs, cont)
        vfs.insert(0, V)
    value_functions = [
        ValueFunction(v.knots, v.values) if v.knots.size >= 2
        else ValueFunction(np.array([v.knots[0], v.knots[0] + 1.0]), np.array([v.values[0], v.values[0] + v.right_slope]))
        for v in vfs
    ]
    return SnellResult(
        reduite_u0=float(V(x0)[0]),
        value_functions=value_functions,
        exercise_regions=None, xgrid=None, backend="exact_pl",
        diagnostics={"budget": 0.0, "breakpoints": int(V.knots.size)},
    )


def snell_bdpp(
    sigmas: Sequence[StepFn],
    specs: Sequence[InnovationSpec],
    payoff: BermudanPayoff,
    x0: float,
    backend: str = "auto",
    grid_points: int = 513,
    quad_nodes: int = 64,
    extra_grid_points: tuple[float, ...] = (),
    keep_value_functions: bool = True,
) -> SnellResult:
    """Backward dynamic programming for the Bermudan reduite.

    Backends: 'tree' (exact enumeration, n <= 4 atomic innovations), 'grid'
    (state-reducible payoff on a lattice) and 'exact_pl' (breakpoint-exact
    lattice for constant coefficients, atomic innovations and terminal
    piecewise-linear payoffs).  'auto' picks 'grid' whenever the payoff is
    reducible, falling back to the tree.
    """
    n = len(sigmas)
    if len(specs) != n:
        raise ValueError("sigmas and specs must have equal length")
    reducible = payoff.functional.reduction() is not None
    atomic = all(spec.kind == "finite_support" for spec in specs)
    if backend == "auto":
        backend = "grid" if reducible else "tree"
    if backend == "exact_pl":
        if not atomic:
            raise BackendUnavailable("exact_pl backend needs finite-support innovations")
        return _exact_pl_backend(sigmas, specs, payoff, x0)
    if backend == "tree":
        if not atomic or n > 4:
            raise BackendUnavailable("tree backend needs finite-support innovations and n <= 4")
        u0 = exhaustive_tree_reduite(sigmas, specs, payoff, x0)
        return SnellResult(u0, None, None, None, backend="tree")
    if backend != "grid":
        raise ValueError(f"unknown backend {backend!r}")
    if not reducible:
        raise BackendUnavailable(
            f"payoff kind {payoff.functional.kind!r} is not state-reducible; use the tree backend"
        )
    res = grid_induction(
        sigmas, specs, payoff.functional, x0, bermudan=payoff,
        grid_points=grid_points, quad_nodes=quad_nodes,
        extra_grid_points=extra_grid_points, keep_value_functions=keep_value_functions,
    )
    return SnellResult(
        reduite_u0=res.value0,
        value_functions=res.value_functions,
        exercise_regions=res.exercise_regions,
        xgrid=res.xgrid,
        backend="grid",
        diagnostics={
            "budget": res.budget,
            "min_convexity_defect": res.min_convexity_defect,
            "continuations": res.continuations,
            "obstacles": res.obstacles,
        },
    )


@dataclass
class BermudanComparison:
    u0: float
    v0: float
    dominance: bool
    tolerance: float
    hypothesis: str
    backend: str
    lo: SnellResult
    hi: SnellResult


def compare_bermudan(
    sigmas: Sequence[StepFn],
    thetas: Sequence[StepFn],
    specs: Sequence[InnovationSpec],
    payoff: BermudanPayoff,
    x0: float,
    hypothesis: str = "auto",
    backend: str = "auto",
    grid_points: int = 513,
    quad_nodes: int = 64,
    extra_grid_points: tuple[float, ...] = (),
) -> BermudanComparison:
    """Reduite comparison u_0 <= v_0 under a certified hypothesis."""
    half = max(reach_half_width(sigmas, specs, x0), reach_half_width(thetas, specs, x0))
    probe = np.linspace(x0 - half, x0 + half, 801)
    hyp = certify_hypothesis(sigmas, thetas, specs, hypothesis, probe=probe)
    lo = snell_bdpp(
        sigmas, specs, payoff, x0, backend=backend, grid_points=grid_points,
        quad_nodes=quad_nodes, extra_grid_points=extra_grid_points,
        keep_value_functions=False,
    )
    hi = snell_bdpp(
        thetas, specs, payoff, x0, backend=backend, grid_points=grid_points,
        quad_nodes=quad_nodes, extra_grid_points=extra_grid_points,
        keep_value_functions=False,
    )
    tol = 1e-10
    if lo.backend == "grid":
        tol = lo.diagnostics["budget"] + hi.diagnostics["budget"] + 1e-12
    return BermudanComparison(
        u0=lo.reduite_u0, v0=hi.reduite_u0,
        dominance=lo.reduite_u0 <= hi.reduite_u0 + tol, tolerance=tol,
        hypothesis=hyp, backend=lo.backend, lo=lo, hi=hi,
    )


@dataclass(frozen=True)
class LatticeModel:
    """Time grid family for refinement studies: one diffusion, varying n.

    For each horizon n the Brownian increment over T/n is replaced by a
    quantized Gaussian with matching variance, giving an atomic lattice whose
    reduite the grid BDPP computes.
    """

    sigma: CoefficientFn
    T: float
    quant_points: int = 16

    def build(self, n: int) -> tuple[list[StepFn], list[InnovationSpec]]:
        dt = self.T / n
        spec = quantize_gaussian(self.quant_points).scaled(math.sqrt(dt))
        steps = [self.sigma.section(k * dt) for k in range(n)]
        return steps, [spec] * n


@dataclass
class RefineRow:
    n: int
    reduite: float
    diff_from_previous: float | None


def refine_study(
    model: LatticeModel,
    payoff: BermudanPayoff,
    x0: float,
    n_list: Sequence[int],
    grid_points: int = 513,
    quad_nodes: int = 64,
    extra_grid_points: tuple[float, ...] = (),
) -> list[RefineRow]:
    """Reduite per time-grid resolution, with successive differences."""
    rows: list[RefineRow] = []
    prev: float | None = None
    for n in n_list:
        steps, specs = model.build(int(n))
        res = snell_bdpp(
            steps, specs, payoff, x0, backend="grid", grid_points=grid_points,
            quad_nodes=quad_nodes, extra_grid_points=extra_grid_points,
            keep_value_functions=False,
        )
        rows.append(
            RefineRow(
                n=int(n), reduite=res.reduite_u0,
                diff_from_previous=None if prev is None else abs(res.reduite_u0 - prev),
            )
        )
        prev = res.reduite_u0
    return rows
