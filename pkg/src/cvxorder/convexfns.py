"""Scalar convex test functions.

The workhorse representation is the canonical piecewise-linear form

    phi(x) = const + slope * x + sum_i coefs[i] * max(x - knots[i], 0)

with all ``coefs >= 0``, which is convex by construction and closed under the
payoff kinds call/put/abs/table.  Expectations of this form against Gaussian
laws have Bachelier-type closed forms, so the operator layer integrates them
exactly instead of by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

SQRT2PI = math.sqrt(2.0 * math.pi)


def norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / SQRT2PI


def norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def bachelier_call(mean: float, std: float, strike: float) -> float:
    """E (mean + std*N - strike)_+ for standard normal N."""
    if std <= 0.0:
        return max(mean - strike, 0.0)
    d = (mean - strike) / std
    return std * norm_pdf(d) + (mean - strike) * norm_cdf(d)


def lognormal_call(x: float, strike: float, sig: float) -> float:
    """E (x * exp(sig*N - sig^2/2) - strike)_+ for standard normal N, x >= 0."""
    if strike <= 0.0:
        return x - strike
    if sig <= 0.0 or x <= 0.0:
        return max(x - strike, 0.0)
    d1 = (math.log(x / strike) + 0.5 * sig * sig) / sig
    return x * norm_cdf(d1) - strike * norm_cdf(d1 - sig)


def gaussian_abs_moment(order: float) -> float:
    """E |N|^p in closed form."""
    return 2.0 ** (order / 2.0) * math.gamma((order + 1.0) / 2.0) / math.sqrt(math.pi)


def hermite_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes and probability weights for N(0,1)."""
    x, w = np.polynomial.hermite_e.hermegauss(int(n))
    return x, w / w.sum()


_PROBE = np.concatenate([-np.geomspace(1e-2, 50.0, 40)[::-1], [0.0], np.geomspace(1e-2, 50.0, 40)])


@dataclass(frozen=True)
class ScalarConvexFn:
    """Descriptor of a convex function of one variable.

    Kinds: ``piecewise_linear`` (canonical form above), ``power`` (|x|^p),
    ``exp_affine`` (exp(lam*x)), ``custom`` (arbitrary callable with declared
    growth).  Convexity of custom functions is probe-checked at construction.
    """

    kind: str
    const: float = 0.0
    slope: float = 0.0
    knots: tuple[float, ...] = ()
    coefs: tuple[float, ...] = ()
    p: float | None = None
    lam: float | None = None
    fn: Callable[[np.ndarray], np.ndarray] | None = None
    growth_r: float = 1.0

    # -- factories ---------------------------------------------------------

    @staticmethod
    def piecewise_linear(
        const: float = 0.0,
        slope: float = 0.0,
        knots: Sequence[float] = (),
        coefs: Sequence[float] = (),
    ) -> "ScalarConvexFn":
        knots = tuple(float(k) for k in knots)
        coefs = tuple(float(c) for c in coefs)
        if len(knots) != len(coefs):
            raise ValueError("knots and coefs must have equal length")
        if any(c < 0 for c in coefs):
            raise ValueError("convexity requires non-negative kink coefficients")
        order = np.argsort(knots) if knots else []
        knots = tuple(knots[i] for i in order)
        coefs = tuple(coefs[i] for i in order)
        return ScalarConvexFn(
            "piecewise_linear", const=float(const), slope=float(slope), knots=knots, coefs=coefs
        )

    @staticmethod
    def call(strike: float) -> "ScalarConvexFn":
        return ScalarConvexFn.piecewise_linear(knots=[strike], coefs=[1.0])

    @staticmethod
    def put(strike: float) -> "ScalarConvexFn":
        # (K - x)_+ = K - x + (x - K)_+
        return ScalarConvexFn.piecewise_linear(const=strike, slope=-1.0, knots=[strike], coefs=[1.0])

    @staticmethod
    def abs() -> "ScalarConvexFn":
        return ScalarConvexFn.piecewise_linear(slope=-1.0, knots=[0.0], coefs=[2.0])

    @staticmethod
    def identity() -> "ScalarConvexFn":
        return ScalarConvexFn.piecewise_linear(slope=1.0)

    @staticmethod
    def power(p: float) -> "ScalarConvexFn":
        if p < 1:
            raise ValueError("|x|^p is convex only for p >= 1")
        return ScalarConvexFn("power", p=float(p), growth_r=float(p))

    @staticmethod
    def exp_affine(lam: float) -> "ScalarConvexFn":
        return ScalarConvexFn("exp_affine", lam=float(lam), growth_r=math.inf)

    @staticmethod
    def from_table(xs: Sequence[float], ys: Sequence[float]) -> "ScalarConvexFn":
        """Convex interpolant of samples; slopes must be non-decreasing."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.ndim != 1 or xs.size < 2 or xs.shape != ys.shape:
            raise ValueError("need at least two (x, y) samples of equal length")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("sample x values must be strictly increasing")
        slopes = np.diff(ys) / np.diff(xs)
        jumps = np.diff(slopes)
        if np.any(jumps < -1e-12):
            raise ValueError("table samples are not convex")
        jumps = np.maximum(jumps, 0.0)
        left = slopes[0]
        const = ys[0] - left * xs[0]
        return ScalarConvexFn.piecewise_linear(
            const=const, slope=left, knots=xs[1:-1], coefs=jumps
        )

    @staticmethod
    def custom(fn: Callable, growth_r: float = 1.0, probe: np.ndarray | None = None) -> "ScalarConvexFn":
        obj = ScalarConvexFn("custom", fn=fn, growth_r=float(growth_r))
        xs = _PROBE if probe is None else np.asarray(probe, dtype=float)
        v = obj(xs)
        mid = obj(0.5 * (xs[:, None] + xs[None, :]))  # all probe pairs
        gap = mid - 0.5 * (v[:, None] + v[None, :])
        worst = float(np.max(gap))
        if worst > 1e-12 * max(1.0, float(np.max(np.abs(v)))):
            raise ValueError(f"custom function fails midpoint convexity (violation {worst:.3e})")
        return obj

    # -- evaluation ----------------------------------------------------------

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        if self.kind == "piecewise_linear":
            out = self.const + self.slope * arr
            for k, c in zip(self.knots, self.coefs):
                out = out + c * np.maximum(arr - k, 0.0)
        elif self.kind == "power":
            out = np.abs(arr) ** self.p
        elif self.kind == "exp_affine":
            out = np.exp(self.lam * arr)
        else:
            out = np.asarray(self.fn(arr), dtype=float)
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    # -- metadata ------------------------------------------------------------

    @property
    def monotone(self) -> str | None:
        """'nondecreasing', 'nonincreasing', or None."""
        if self.kind == "piecewise_linear":
            if self.slope >= 0:
                return "nondecreasing"
            if self.slope + sum(self.coefs) <= 0:
                return "nonincreasing"
            return None
        if self.kind == "exp_affine":
            return "nondecreasing" if self.lam >= 0 else "nonincreasing"
        return None

    def minimum(self) -> float:
        """Global infimum (-inf when unbounded below)."""
        if self.kind == "piecewise_linear":
            s_end = self.slope + sum(self.coefs)
            if self.slope > 0 or s_end < 0:
                return -math.inf
            if self.slope == 0:
                return self.const  # flat left plateau, then non-decreasing
            run = self.slope  # slope < 0 <= s_end: minimum where slope turns >= 0
            for k, c in zip(self.knots, self.coefs):
                run += c
                if run >= 0:
                    return float(self(k))
            return -math.inf
        if self.kind in ("power", "exp_affine"):
            return 0.0
        return float(np.min(self(_PROBE)))
