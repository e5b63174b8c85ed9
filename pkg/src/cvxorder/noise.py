"""Random-increment laws.

Three families cover every experiment in the package:

* centered Gaussian innovations,
* finite-support atomic laws (the exact-enumeration backend and the
  quantized surrogates used by lattice backward inductions),
* one-step increments of a martingale Levy process (Brownian component plus
  compensated compound Poisson jumps).

All laws are centered by construction; compound-Poisson compensation is baked
into the increment rather than exposed as a drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NotFiniteSupport
from .rng import BLOCK_ROWS, RngStream, _fill_blocks

_ATOL = 1e-14


def _as_prob_vector(probs: Sequence[float]) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probs must be a non-empty 1-d sequence")
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > _ATOL:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1 within {_ATOL}")
    return p


def _is_reflection_closed(points: np.ndarray, probs: np.ndarray) -> bool:
    """True when the atomic law equals its reflection about 0."""
    order = np.argsort(-points)
    return bool(
        np.allclose(points, -points[order], atol=1e-12)
        and np.allclose(probs, probs[order], atol=1e-12)
    )


@dataclass(frozen=True)
class JumpLaw:
    """Law of a single compound-Poisson jump."""

    kind: str  # "two_point" | "gaussian" | "finite_support"
    params: tuple

    @staticmethod
    def two_point(down: float, up: float, p_up: float) -> "JumpLaw":
        if not 0.0 <= p_up <= 1.0:
            raise ValueError("p_up must lie in [0, 1]")
        return JumpLaw("two_point", (float(down), float(up), float(p_up)))

    @staticmethod
    def gaussian(mean: float, variance: float) -> "JumpLaw":
        if variance <= 0:
            raise ValueError("jump variance must be positive")
        return JumpLaw("gaussian", (float(mean), float(variance)))

    @staticmethod
    def finite_support(points: Sequence[float], probs: Sequence[float]) -> "JumpLaw":
        x = np.asarray(points, dtype=float)
        p = _as_prob_vector(probs)
        if x.shape != p.shape:
            raise ValueError("points and probs must have equal length")
        order = np.argsort(x)
        return JumpLaw("finite_support", (tuple(x[order]), tuple(p[order])))

    def mean(self) -> float:
        if self.kind == "two_point":
            d, u, p = self.params
            return p * u + (1.0 - p) * d
        if self.kind == "gaussian":
            return self.params[0]
        x, p = self.params
        return float(np.dot(x, p))

    def second_moment(self) -> float:
        if self.kind == "two_point":
            d, u, p = self.params
            return p * u * u + (1.0 - p) * d * d
        if self.kind == "gaussian":
            m, v = self.params
            return v + m * m
        x, p = self.params
        return float(np.dot(np.square(x), p))

    def abs_moment(self, order: float) -> float:
        if self.kind == "two_point":
            d, u, p = self.params
            return p * abs(u) ** order + (1.0 - p) * abs(d) ** order
        if self.kind == "gaussian":
            # E|J|^p for J ~ N(m, v); exact for m = 0, quadrature otherwise
            m, v = self.params
            z, w = np.polynomial.hermite_e.hermegauss(64)
            w = w / math.sqrt(2.0 * math.pi)
            return float(np.dot(w, np.abs(m + math.sqrt(v) * z) ** order))
        x, p = self.params
        return float(np.dot(np.abs(x) ** order, p))

    @property
    def symmetric(self) -> bool:
        if self.kind == "two_point":
            d, u, p = self.params
            return abs(p - 0.5) <= 1e-12 and abs(d + u) <= 1e-12
        if self.kind == "gaussian":
            return abs(self.params[0]) <= 1e-12
        x, p = self.params
        return _is_reflection_closed(np.asarray(x), np.asarray(p))

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "two_point":
            d, u, p = self.params
            return np.array([d, u]), np.array([1.0 - p, p])
        if self.kind == "finite_support":
            x, p = self.params
            return np.asarray(x, dtype=float), np.asarray(p, dtype=float)
        raise NotFiniteSupport(f"jump law {self.kind!r} has no finite support")

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "gaussian":
            m, v = self.params
            return m + math.sqrt(v) * gen.standard_normal(size)
        x, p = self.atoms()
        idx = np.searchsorted(np.cumsum(p), gen.random(size), side="right")
        return x[np.minimum(idx, len(x) - 1)]


@dataclass(frozen=True)
class LevySpec:
    """Martingale Levy process: ``a W_t`` plus a compensated compound Poisson.

    ``cp_intensity`` counts jumps per unit time; ``jump_law`` is the law of one
    jump.  ``compensated`` must stay True: every comparison theorem in scope
    assumes a centered driver, so the compensator is part of the increment.
    ``p_moment`` declares the finite moment order used by growth checks; all
    shipped jump laws have moments of every order, so the moment hypotheses
    hold by construction.
    """

    brownian_coeff_a: float = 0.0
    cp_intensity: float = 0.0
    jump_law: JumpLaw | None = None
    p_moment: float = 2.0
    compensated: bool = True

    def __post_init__(self):
        if self.brownian_coeff_a < 0:
            raise ValueError("brownian_coeff_a must be >= 0")
        if self.cp_intensity < 0:
            raise ValueError("cp_intensity must be >= 0")
        if self.cp_intensity > 0 and self.jump_law is None:
            raise ValueError("positive jump intensity requires a jump_law")
        if not self.compensated:
            raise ValueError("only compensated (martingale) Levy drivers are supported")
        if self.p_moment <= 1:
            raise ValueError("p_moment must exceed 1")
        if self.brownian_coeff_a > 0 and self.p_moment < 2:
            raise ValueError("a Brownian component requires p_moment >= 2")

    @property
    def jump_mean(self) -> float:
        return 0.0 if self.jump_law is None else self.jump_law.mean()

    def increment_variance(self, dt: float) -> float:
        v = self.brownian_coeff_a**2 * dt
        if self.cp_intensity > 0:
            v += self.cp_intensity * dt * self.jump_law.second_moment()
        return v

    @property
    def symmetric(self) -> bool:
        return self.cp_intensity == 0 or self.jump_law.symmetric


@dataclass(frozen=True)
class InnovationSpec:
    """Law of one centered noise increment ``Z_k``.

    Use the factories ``gaussian``, ``finite_support``, ``rademacher`` and
    ``levy_increment``; the constructor itself only validates.  ``symmetric``
    is derived from the law (reflection closure for atomic laws), never trusted
    from the caller.  ``moment_order_p`` bounds the growth exponent of
    integrands fed to the expectation operators.
    """

    kind: str  # "gaussian" | "finite_support" | "levy_increment"
    variance: float | None = None
    points: tuple[float, ...] | None = None
    probs: tuple[float, ...] | None = None
    levy: LevySpec | None = None
    dt: float | None = None
    symmetric: bool = False
    moment_order_p: float = math.inf

    # -- factories ---------------------------------------------------------

    @staticmethod
    def gaussian(variance: float = 1.0) -> "InnovationSpec":
        if variance <= 0:
            raise ValueError("gaussian variance must be positive")
        return InnovationSpec(kind="gaussian", variance=float(variance), symmetric=True)

    @staticmethod
    def finite_support(points: Sequence[float], probs: Sequence[float]) -> "InnovationSpec":
        x = np.asarray(points, dtype=float)
        p = _as_prob_vector(probs)
        if x.ndim != 1 or x.shape != p.shape:
            raise ValueError("points and probs must be 1-d of equal length")
        if len(np.unique(x)) != len(x):
            raise ValueError("support points must be distinct")
        mean = float(np.dot(x, p))
        if abs(mean) > _ATOL:
            raise ValueError(f"atomic law has mean {mean!r}; martingale increments must be centered")
        order = np.argsort(x)
        x, p = x[order], p[order]
        return InnovationSpec(
            kind="finite_support",
            points=tuple(x),
            probs=tuple(p),
            symmetric=_is_reflection_closed(x, p),
        )

    @staticmethod
    def rademacher(scale: float = 1.0) -> "InnovationSpec":
        return InnovationSpec.finite_support([-scale, scale], [0.5, 0.5])

    @staticmethod
    def levy_increment(levy: LevySpec, dt: float) -> "InnovationSpec":
        if dt <= 0:
            raise ValueError("dt must be positive")
        return InnovationSpec(
            kind="levy_increment",
            levy=levy,
            dt=float(dt),
            symmetric=levy.symmetric,
            moment_order_p=levy.p_moment,
        )

    # -- law descriptors ----------------------------------------------------

    def var(self) -> float:
        if self.kind == "gaussian":
            return self.variance
        if self.kind == "finite_support":
            return float(np.dot(np.square(self.points), self.probs))
        return self.levy.increment_variance(self.dt)

    def std(self) -> float:
        return math.sqrt(self.var())

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind != "finite_support":
            raise NotFiniteSupport(f"innovation kind {self.kind!r} has no finite support")
        return np.asarray(self.points), np.asarray(self.probs)

    def scaled(self, c: float) -> "InnovationSpec":
        """Law of ``c * Z``; keeps atomic laws exact."""
        if self.kind == "gaussian":
            return InnovationSpec.gaussian(self.variance * c * c)
        if self.kind == "finite_support":
            pts = c * np.asarray(self.points)
            order = np.argsort(pts)
            return InnovationSpec.finite_support(pts[order], np.asarray(self.probs)[order])
        raise NotFiniteSupport("cannot rescale a Levy increment law in closed form")

    # -- sampling -----------------------------------------------------------

    def sample_array(self, stream: RngStream, size: int) -> np.ndarray:
        if self.kind == "gaussian":
            return math.sqrt(self.variance) * stream.gen.standard_normal(size)
        if self.kind == "finite_support":
            x, p = self.atoms()
            idx = np.searchsorted(np.cumsum(p), stream.gen.random(size), side="right")
            return x[np.minimum(idx, len(x) - 1)]
        return _levy_increments(self.levy, self.dt, stream.gen, size)

    def sample(self, stream: RngStream) -> float:
        return float(self.sample_array(stream, 1)[0])


# -- spec-level operations ----------------------------------------------------


def sample_innovation(spec: InnovationSpec, stream: RngStream) -> float:
    """One draw from ``spec``; deterministic given the stream position."""
    return spec.sample(stream)


def enumerate_support(spec: InnovationSpec) -> list[tuple[float, float]]:
    """Exact atoms ``(value, prob)`` in ascending value order."""
    x, p = spec.atoms()
    return [(float(a), float(b)) for a, b in zip(x, p)]


def quantize_gaussian(n_points: int) -> InnovationSpec:
    """Symmetric atomic surrogate of N(0,1) from Gauss-Hermite nodes.

    Weights are the normalized Gauss-Hermite weights; nodes are rescaled so the
    atomic variance is exactly 1.  Moments up to order ``2 n_points - 1`` match
    the standard Gaussian.
    """
    n_points = int(n_points)
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    x, w = np.polynomial.hermite_e.hermegauss(n_points)
    p = w / w.sum()
    # enforce exact reflection symmetry, then exact zero mean / unit variance
    p = 0.5 * (p + p[::-1])
    x = 0.5 * (x - x[::-1])
    x = x / math.sqrt(float(np.dot(p, np.square(x))))
    return InnovationSpec.finite_support(x, p)


def sample_levy_increment(levy: LevySpec, dt: float, stream: RngStream) -> float:
    """One compensated increment over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return float(_levy_increments(levy, dt, stream.gen, 1)[0])


def _levy_increments(levy: LevySpec, dt: float, gen: np.random.Generator, size) -> np.ndarray:
    """Compensated increments: a*sqrt(dt)*N + sum of Poisson jumps - lam*dt*E[J]."""
    out = np.zeros(size, dtype=float)
    if levy.brownian_coeff_a > 0:
        out += levy.brownian_coeff_a * math.sqrt(dt) * gen.standard_normal(size)
    if levy.cp_intensity > 0:
        counts = gen.poisson(levy.cp_intensity * dt, size)
        remaining = counts.copy()
        while True:
            mask = remaining > 0
            m = int(mask.sum())
            if m == 0:
                break
            out[mask] += levy.jump_law.sample(gen, m)
            remaining[mask] -= 1
        out -= levy.cp_intensity * dt * levy.jump_mean
    return out


def quantize_levy_increment(
    levy: LevySpec,
    dt: float,
    n_gauss: int = 8,
    max_jumps: int = 6,
    atom_tol: float = 1e-12,
) -> InnovationSpec:
    """Finite-support surrogate of a Levy increment for lattice inductions.

    The Poisson jump count is truncated at ``max_jumps`` (tail mass folded into
    the truncation by renormalizing), the jump-sum law is the exact
    convolution of atomic jumps, and the Brownian part is Gauss-Hermite
    quantized.  The result is recentered exactly so the surrogate is a
    martingale increment despite the truncation.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    # jump-count mixture of k-fold convolutions
    sums: dict[float, float] = {0.0: 1.0}
    if levy.cp_intensity > 0:
        jx, jp = levy.jump_law.atoms()
        lam = levy.cp_intensity * dt
        k_probs = [math.exp(-lam) * lam**k / math.factorial(k) for k in range(max_jumps + 1)]
        scale = sum(k_probs)
        conv: dict[float, float] = {0.0: 1.0}
        mixture: dict[float, float] = {0.0: k_probs[0] / scale}
        for k in range(1, max_jumps + 1):
            nxt: dict[float, float] = {}
            for s, q in conv.items():
                for a, pa in zip(jx, jp):
                    key = s + a
                    nxt[key] = nxt.get(key, 0.0) + q * pa
            conv = nxt
            for s, q in conv.items():
                mixture[s] = mixture.get(s, 0.0) + q * k_probs[k] / scale
        sums = mixture
    # convolve with the quantized Brownian part
    atoms: dict[float, float] = sums
    if levy.brownian_coeff_a > 0:
        g = quantize_gaussian(n_gauss)
        gx, gp = g.atoms()
        gx = gx * levy.brownian_coeff_a * math.sqrt(dt)
        merged: dict[float, float] = {}
        for s, q in atoms.items():
            for a, pa in zip(gx, gp):
                key = s + a
                merged[key] = merged.get(key, 0.0) + q * pa
        atoms = merged
    xs = np.array(sorted(atoms))
    ps = np.array([atoms[x] for x in xs])
    # merge near-duplicates produced by the convolution
    keep_x, keep_p = [xs[0]], [ps[0]]
    for x, p in zip(xs[1:], ps[1:]):
        if x - keep_x[-1] <= atom_tol * max(1.0, abs(x)):
            keep_p[-1] += p
        else:
            keep_x.append(x)
            keep_p.append(p)
    xs, ps = np.array(keep_x), np.array(keep_p)
    ps /= ps.sum()
    xs -= np.dot(xs, ps)  # exact recentering (compensator + truncation bias)
    return InnovationSpec.finite_support(xs, ps)


# -- batch draws for Monte Carlo ----------------------------------------------


def innovation_matrix(
    specs: Sequence[InnovationSpec], seed: int, n_paths: int, threads: int = 1
) -> np.ndarray:
    """(n_paths, n) draws, column k from specs[k]; block-keyed and reproducible."""
    specs = list(specs)
    n = len(specs)

    def draw(gen: np.random.Generator, rows: int) -> np.ndarray:
        out = np.empty((rows, n), dtype=float)
        stream_like = _GenView(gen)
        for k, spec in enumerate(specs):
            out[:, k] = spec.sample_array(stream_like, rows)
        return out

    return _fill_blocks(draw, seed, n_paths, threads)


def levy_increment_matrix(
    levy: LevySpec, dt: float, seed: int, n_paths: int, n_steps: int, threads: int = 1
) -> np.ndarray:
    """(n_paths, n_steps) compensated Levy increments, block-keyed."""

    def draw(gen: np.random.Generator, rows: int) -> np.ndarray:
        return _levy_increments(levy, dt, gen, (rows, n_steps))

    return _fill_blocks(draw, seed, n_paths, threads)


class _GenView:
    """Adapter giving a raw Generator the RngStream attribute shape."""

    __slots__ = ("gen",)

    def __init__(self, gen: np.random.Generator):
        self.gen = gen


__all__ = [
    "JumpLaw",
    "LevySpec",
    "InnovationSpec",
    "sample_innovation",
    "enumerate_support",
    "quantize_gaussian",
    "sample_levy_increment",
    "quantize_levy_increment",
    "innovation_matrix",
    "levy_increment_matrix",
    "BLOCK_ROWS",
]
