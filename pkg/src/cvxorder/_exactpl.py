"""Exact propagation of convex piecewise-linear value functions.

Convex piecewise-linear functions are closed under the two operations of the
backward dynamic programming principle when the step coefficients are
constants and innovations atomic: finite mixtures of shifts, and pointwise
max (crossing points are computed and inserted as new breakpoints).  Within
that regime the backward induction is exact, giving a breakpoint-adaptive
lattice backend with no interpolation error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convexfns import ScalarConvexFn


@dataclass
class PLFunction:
    """Convex piecewise-linear function: breakpoints, values, end slopes."""

    knots: np.ndarray
    values: np.ndarray
    left_slope: float
    right_slope: float

    def __call__(self, x) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.interp(xs, self.knots, self.values)
        below = xs < self.knots[0]
        above = xs > self.knots[-1]
        if below.any():
            y = np.where(below, self.values[0] + self.left_slope * (xs - self.knots[0]), y)
        if above.any():
            y = np.where(above, self.values[-1] + self.right_slope * (xs - self.knots[-1]), y)
        return y

    def prune(self, tol: float = 1e-13) -> "PLFunction":
        """Drop breakpoints where the slope does not actually change."""
        if self.knots.size <= 2:
            return self
        kn, vals = self.knots, self.values
        slopes = np.concatenate([[self.left_slope], np.diff(vals) / np.diff(kn), [self.right_slope]])
        scale = max(1.0, float(np.max(np.abs(slopes))))
        keep = np.abs(np.diff(slopes)) > tol * scale
        if keep.all():
            return self
        if not keep.any():
            idx = np.array([0])
        else:
            idx = np.nonzero(keep)[0]
        return PLFunction(kn[idx], vals[idx], self.left_slope, self.right_slope)


def from_scalar_fn(f: ScalarConvexFn, scale: float = 1.0) -> PLFunction:
    """PL representation of scale * f for a piecewise-linear descriptor."""
    if f.kind != "piecewise_linear":
        raise ValueError("exact PL backend needs piecewise-linear scalar functions")
    knots = np.asarray(f.knots, dtype=float) if f.knots else np.array([0.0])
    values = scale * np.asarray(f(knots), dtype=float)
    left = scale * f.slope
    right = scale * (f.slope + sum(f.coefs))
    return PLFunction(knots, np.atleast_1d(values), left, right)


def mixture_shift(pl: PLFunction, u: float, atoms: np.ndarray, probs: np.ndarray) -> PLFunction:
    """Exact Q-step: x -> sum_j p_j pl(x + u z_j)."""
    if u == 0.0:
        return pl
    kn = np.unique(np.concatenate([pl.knots - u * z for z in atoms]))
    vals = np.zeros(kn.size)
    for z, p in zip(atoms, probs):
        vals += p * pl(kn + u * z)
    return PLFunction(kn, vals, pl.left_slope, pl.right_slope).prune()


def pl_max(a: PLFunction, b: PLFunction) -> PLFunction:
    """Pointwise max with crossing points inserted as breakpoints."""
    kn = np.unique(np.concatenate([a.knots, b.knots]))
    va, vb = a(kn), b(kn)
    d = va - vb
    crossings = []
    # interior crossings: both functions are affine between consecutive knots
    sign_flip = d[:-1] * d[1:] < 0
    for i in np.nonzero(sign_flip)[0]:
        x0, x1 = kn[i], kn[i + 1]
        t = d[i] / (d[i] - d[i + 1])
        crossings.append(x0 + t * (x1 - x0))
    # crossings in the extrapolation regions
    dl = a.left_slope - b.left_slope
    if dl != 0.0:
        x_star = kn[0] - d[0] / dl
        if x_star < kn[0]:
            crossings.append(x_star)
    dr = a.right_slope - b.right_slope
    if dr != 0.0:
        x_star = kn[-1] - d[-1] / dr
        if x_star > kn[-1]:
            crossings.append(x_star)
    if crossings:
        kn = np.unique(np.concatenate([kn, np.asarray(crossings)]))
        va, vb = a(kn), b(kn)
    vals = np.maximum(va, vb)
    # dominant branch at the far ends decides the end slopes
    left = a.left_slope if _left_dominant(a, b, kn[0]) else b.left_slope
    right = a.right_slope if _right_dominant(a, b, kn[-1]) else b.right_slope
    return PLFunction(kn, vals, left, right).prune()


def _left_dominant(a: PLFunction, b: PLFunction, x_end: float) -> bool:
    probe = x_end - 1.0
    fa, fb = float(a(probe)[0]), float(b(probe)[0])
    if fa != fb:
        return fa > fb
    return a.left_slope <= b.left_slope


def _right_dominant(a: PLFunction, b: PLFunction, x_end: float) -> bool:
    probe = x_end + 1.0
    fa, fb = float(a(probe)[0]), float(b(probe)[0])
    if fa != fb:
        return fa > fb
    return a.right_slope >= b.right_slope
