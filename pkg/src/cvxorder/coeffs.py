"""Diffusion-coefficient descriptors.

A ``CoefficientFn`` is a function sigma(t, x) together with the certificates
the comparison theorems need: linear-growth constant, convexity in x, sign,
boundedness, monotonicity.  Flags are derived analytically for the built-in
kinds and probe-validated for user callables; hypothesis checks downstream
refuse to run when a needed certificate is absent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_PROBE_X = np.concatenate(
    [-np.geomspace(1e-3, 1e3, 60)[::-1], [0.0], np.geomspace(1e-3, 1e3, 60)]
)


@dataclass(frozen=True)
class StepFn:
    """One-step coefficient sigma_k(.) with its certificates."""

    fn: Callable[[np.ndarray], np.ndarray]
    convex: bool
    nonneg: bool
    label: str = ""

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        out = np.asarray(self.fn(arr), dtype=float)
        out = np.broadcast_to(out, arr.shape) if out.shape != arr.shape else out
        return float(out) if arr.ndim == 0 else out

    @staticmethod
    def constant(c: float) -> "StepFn":
        c = float(c)
        return StepFn(lambda x: np.full(np.shape(x), c), convex=True, nonneg=c >= 0, label=f"const({c})")

    @staticmethod
    def from_callable(fn: Callable, convex: bool, nonneg: bool, label: str = "custom") -> "StepFn":
        return StepFn(fn, convex=convex, nonneg=nonneg, label=label)


@dataclass(frozen=True)
class CoefficientFn:
    """sigma(t, x) descriptor with certified metadata.

    bounds, when present, certify ``bounds[0] <= sigma(t, x) <= bounds[1]``
    everywhere; ``growth_constant_C`` certifies |sigma(t,x)| <= C (1 + |x|).
    """

    kind: str
    params: tuple
    growth_constant_C: float
    convex_in_x: bool
    nonneg: bool
    bounded: bool = False
    bounds: tuple[float, float] | None = None
    nondecreasing_in_x: bool | None = None
    lipschitz_in_x: float | None = None

    # -- factories ---------------------------------------------------------

    @staticmethod
    def constant(c: float) -> "CoefficientFn":
        c = float(c)
        return CoefficientFn(
            "constant", (c,), growth_constant_C=abs(c), convex_in_x=True,
            nonneg=c >= 0, bounded=True, bounds=(c, c), nondecreasing_in_x=True,
            lipschitz_in_x=0.0,
        )

    @staticmethod
    def time_fn(times: Sequence[float], values: Sequence[float]) -> "CoefficientFn":
        """sigma(t) constant in x, piecewise-linear in t between samples."""
        ts = np.asarray(times, dtype=float)
        vs = np.asarray(values, dtype=float)
        if ts.ndim != 1 or ts.shape != vs.shape or ts.size < 1:
            raise ValueError("times and values must be 1-d of equal positive length")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("times must be strictly increasing")
        lo, hi = float(np.min(vs)), float(np.max(vs))
        return CoefficientFn(
            "time_fn", (tuple(ts), tuple(vs)), growth_constant_C=max(abs(lo), abs(hi)),
            convex_in_x=True, nonneg=lo >= 0, bounded=True, bounds=(lo, hi),
            nondecreasing_in_x=True, lipschitz_in_x=0.0,
        )

    @staticmethod
    def affine(a: float, b: float) -> "CoefficientFn":
        """sigma(x) = a + b x."""
        a, b = float(a), float(b)
        return CoefficientFn(
            "affine", (a, b), growth_constant_C=max(abs(a), abs(b)), convex_in_x=True,
            nonneg=(b == 0 and a >= 0), bounded=(b == 0),
            bounds=(a, a) if b == 0 else None,
            nondecreasing_in_x=b >= 0, lipschitz_in_x=abs(b),
        )

    @staticmethod
    def bounded_rational(c0: float, c1: float, center: float = 0.0, scale: float = 1.0) -> "CoefficientFn":
        """sigma(x) = c0 + c1 / (1 + ((x - center) / scale)^2)."""
        if scale <= 0:
            raise ValueError("scale must be positive")
        c0, c1 = float(c0), float(c1)
        lo, hi = min(c0, c0 + c1), max(c0, c0 + c1)
        return CoefficientFn(
            "bounded_rational", (c0, c1, float(center), float(scale)),
            growth_constant_C=max(abs(lo), abs(hi)), convex_in_x=False,
            nonneg=lo >= 0, bounded=True, bounds=(lo, hi),
            nondecreasing_in_x=False, lipschitz_in_x=None,
        )

    @staticmethod
    def sigmoid(c: float, center: float = 0.0, scale: float = 1.0) -> "CoefficientFn":
        """sigma(x) = c / (1 + exp(-(x - center) / scale)): bounded, monotone."""
        if scale <= 0:
            raise ValueError("scale must be positive")
        c = float(c)
        lo, hi = min(0.0, c), max(0.0, c)
        return CoefficientFn(
            "sigmoid", (c, float(center), float(scale)),
            growth_constant_C=max(abs(lo), abs(hi)), convex_in_x=False,
            nonneg=c >= 0, bounded=True, bounds=(lo, hi),
            nondecreasing_in_x=c >= 0, lipschitz_in_x=abs(c) / (4.0 * scale),
        )

    @staticmethod
    def local_vol_wrap(inner: "CoefficientFn") -> "CoefficientFn":
        """x * inner(t, x), extended by zero for x <= 0.

        Requires a bounded inner volatility.  The wrap is convex in x when the
        inner function does not depend on x (then x -> x_+ * sigma(t) is convex
        for sigma(t) >= 0).
        """
        if not inner.bounded or inner.bounds is None:
            raise ValueError("local_vol_wrap requires a bounded inner coefficient")
        sup = max(abs(inner.bounds[0]), abs(inner.bounds[1]))
        x_free = inner.kind in ("constant", "time_fn")
        return CoefficientFn(
            "local_vol_wrap", (inner,), growth_constant_C=sup,
            convex_in_x=bool(x_free and inner.nonneg), nonneg=inner.nonneg,
            bounded=False, bounds=None, nondecreasing_in_x=None, lipschitz_in_x=None,
        )

    @staticmethod
    def from_callable(
        fn: Callable[[float, np.ndarray], np.ndarray],
        growth_constant_C: float,
        convex_in_x: bool = False,
        nonneg: bool = False,
        bounded: bool = False,
        bounds: tuple[float, float] | None = None,
        nondecreasing_in_x: bool | None = None,
        probe_times: Sequence[float] = (0.0, 0.5, 1.0),
    ) -> "CoefficientFn":
        obj = CoefficientFn(
            "callable", (fn,), growth_constant_C=float(growth_constant_C),
            convex_in_x=convex_in_x, nonneg=nonneg, bounded=bounded,
            bounds=tuple(bounds) if bounds is not None else None,
            nondecreasing_in_x=nondecreasing_in_x,
        )
        obj.validate(probe_times)
        return obj

    # -- evaluation ----------------------------------------------------------

    def __call__(self, t: float, x):
        arr = np.asarray(x, dtype=float)
        if self.kind == "constant":
            out = np.full(arr.shape, self.params[0])
        elif self.kind == "time_fn":
            ts, vs = self.params
            out = np.full(arr.shape, float(np.interp(t, ts, vs)))
        elif self.kind == "affine":
            a, b = self.params
            out = a + b * arr
        elif self.kind == "bounded_rational":
            c0, c1, m, s = self.params
            out = c0 + c1 / (1.0 + ((arr - m) / s) ** 2)
        elif self.kind == "sigmoid":
            c, m, s = self.params
            out = c / (1.0 + np.exp(-(arr - m) / s))
        elif self.kind == "local_vol_wrap":
            inner = self.params[0]
            out = np.where(arr > 0, arr * np.asarray(inner(t, arr), dtype=float), 0.0)
        else:
            out = np.asarray(self.params[0](t, arr), dtype=float)
            out = np.broadcast_to(out, arr.shape) if out.shape != arr.shape else out
        return float(out) if arr.ndim == 0 else out

    def section(self, t: float) -> StepFn:
        """Freeze time: the step coefficient sigma(t, .)."""
        return StepFn(
            lambda x, _t=float(t): self(_t, x),
            convex=self.convex_in_x,
            nonneg=self.nonneg,
            label=f"{self.kind}@t={t:g}",
        )

    # -- certification -------------------------------------------------------

    def validate(self, probe_times: Sequence[float] = (0.0, 0.5, 1.0), tol: float = 1e-9) -> None:
        """Probe-check the declared certificates; raise ValueError on mismatch."""
        xs = _PROBE_X
        for t in probe_times:
            v = np.asarray(self(t, xs), dtype=float)
            if np.any(np.abs(v) > self.growth_constant_C * (1.0 + np.abs(xs)) + tol):
                raise ValueError(f"{self.kind}: linear-growth constant C={self.growth_constant_C} violated")
            if self.nonneg and np.any(v < -tol):
                raise ValueError(f"{self.kind}: declared non-negative but takes negative values")
            if self.bounds is not None:
                lo, hi = self.bounds
                if np.any(v < lo - tol) or np.any(v > hi + tol):
                    raise ValueError(f"{self.kind}: declared bounds {self.bounds} violated")
            if self.convex_in_x:
                mid = np.asarray(self(t, 0.5 * (xs[:-1] + xs[1:])), dtype=float)
                gap = mid - 0.5 * (v[:-1] + v[1:])
                if np.any(gap > 1e-10 * np.maximum(1.0, np.abs(v[:-1]) + np.abs(v[1:]))):
                    raise ValueError(f"{self.kind}: declared convex in x but fails midpoint probe")
            if self.nondecreasing_in_x:
                if np.any(np.diff(v) < -tol):
                    raise ValueError(f"{self.kind}: declared non-decreasing in x but decreases")
