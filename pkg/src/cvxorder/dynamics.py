"""Process simulators.

Single-path operations draw from an ``RngStream`` and return ``Path`` objects;
the ``*_batch`` variants consume pre-drawn innovation matrices so that both
sides of a comparison can share draws (common random numbers) and large runs
stay vectorized.  Euler schemes are realized at grid points; between points the
piecewise-affine interpolant stands in for Brownian dynamics, while Levy paths
use the stepwise-constant evaluation rule and payoffs consume grid values
directly.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .coeffs import CoefficientFn, StepFn
from .errors import OutOfRange
from .noise import InnovationSpec, LevySpec, _levy_increments
from .rng import RngStream

PATH_MAGIC = b"CVXPATH1"


@dataclass(frozen=True)
class GridSpec:
    """Uniform mesh t_k = k T / n of [0, T]."""

    n: int
    T: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)


@dataclass
class Path:
    """Values of one trajectory at the n+1 grid points."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n + 1,):
            raise ValueError("values length must equal grid.n + 1")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "value"])
            for t, v in zip(self.grid.times, self.values):
                writer.writerow([repr(float(t)), repr(float(v))])


def interpolate_in(path: Path, t) -> float | np.ndarray:
    """Piecewise-affine interpolant I_n at time t (exact at grid nodes)."""
    ts = np.asarray(t, dtype=float)
    if np.any(ts < 0.0) or np.any(ts > path.grid.T):
        raise OutOfRange(f"t must lie in [0, {path.grid.T}]")
    n, T = path.grid.n, path.grid.T
    k = np.minimum((ts * n / T).astype(int), n - 1)
    tk = k * T / n
    tk1 = (k + 1) * T / n
    x = path.values
    out = (n / T) * ((tk1 - ts) * x[k] + (ts - tk) * x[k + 1])
    return float(out) if ts.ndim == 0 else out


# -- discrete recursion X_{k+1} = X_k + sigma_k(X_k) Z_{k+1} -------------------


def simulate_discrete_batch(
    sigmas: Sequence[StepFn], innovations: np.ndarray, x0: float
) -> np.ndarray:
    """All paths of the recursion; innovations has shape (n_paths, n)."""
    z = np.asarray(innovations, dtype=float)
    n_paths, n = z.shape
    if len(sigmas) != n:
        raise ValueError("need one step coefficient per innovation column")
    out = np.empty((n_paths, n + 1), dtype=float)
    out[:, 0] = x0
    for k in range(n):
        xk = out[:, k]
        out[:, k + 1] = xk + sigmas[k](xk) * z[:, k]
    return out


def simulate_discrete(
    sigmas: Sequence[StepFn], specs: Sequence[InnovationSpec], x0: float, stream: RngStream
) -> Path:
    if len(sigmas) != len(specs):
        raise ValueError("sigmas and specs must have equal length")
    n = len(sigmas)
    z = np.array([spec.sample(stream) for spec in specs])
    vals = simulate_discrete_batch(sigmas, z[None, :], x0)[0]
    return Path(GridSpec(n, float(n)), vals)


# -- Euler schemes -------------------------------------------------------------


def euler_brownian_batch(
    sigma: CoefficientFn, grid: GridSpec, x0: float, normals: np.ndarray
) -> np.ndarray:
    """Euler scheme with frozen-left coefficient; normals are N(0,1) draws."""
    z = np.asarray(normals, dtype=float)
    n_paths, n = z.shape
    if n != grid.n:
        raise ValueError("normals must have grid.n columns")
    sdt = math.sqrt(grid.dt)
    out = np.empty((n_paths, n + 1), dtype=float)
    out[:, 0] = x0
    for k in range(n):
        tk = k * grid.dt
        xk = out[:, k]
        out[:, k + 1] = xk + sigma(tk, xk) * (sdt * z[:, k])
    return out


def euler_brownian(sigma: CoefficientFn, grid: GridSpec, x0: float, stream: RngStream) -> Path:
    z = stream.gen.standard_normal(grid.n)
    return Path(grid, euler_brownian_batch(sigma, grid, x0, z[None, :])[0])


def euler_levy_batch(
    kappa: CoefficientFn, grid: GridSpec, x0: float, increments: np.ndarray
) -> np.ndarray:
    """Euler scheme driven by pre-drawn compensated Levy increments."""
    dz = np.asarray(increments, dtype=float)
    n_paths, n = dz.shape
    if n != grid.n:
        raise ValueError("increments must have grid.n columns")
    out = np.empty((n_paths, n + 1), dtype=float)
    out[:, 0] = x0
    for k in range(n):
        tk = k * grid.dt
        xk = out[:, k]
        out[:, k + 1] = xk + kappa(tk, xk) * dz[:, k]
    return out


def euler_levy(
    kappa: CoefficientFn, levy: LevySpec, grid: GridSpec, x0: float, stream: RngStream
) -> Path:
    dz = _levy_increments(levy, grid.dt, stream.gen, grid.n)
    return Path(grid, euler_levy_batch(kappa, grid, x0, dz[None, :])[0])


# -- local volatility ----------------------------------------------------------


def local_vol_batch(
    sigma: CoefficientFn, grid: GridSpec, s0: float, normals: np.ndarray
) -> tuple[np.ndarray, int]:
    """Euler paths of dS = S sigma(t, S) dW with the zero extension for S <= 0.

    Returns the paths and the number of paths that ever left the positive
    half-line (the Euler scheme, unlike the SDE, can cross zero).
    """
    if s0 <= 0:
        raise ValueError("s0 must be positive")
    wrapped = CoefficientFn.local_vol_wrap(sigma)
    vals = euler_brownian_batch(wrapped, grid, s0, normals)
    nonpositive = int(np.sum(np.any(vals <= 0.0, axis=1)))
    return vals, nonpositive


def simulate_local_vol(sigma: CoefficientFn, grid: GridSpec, s0: float, stream: RngStream) -> Path:
    z = stream.gen.standard_normal(grid.n)
    vals, _ = local_vol_batch(sigma, grid, s0, z[None, :])
    return Path(grid, vals[0])


# -- discrete stochastic integrals and Doleans exponentials --------------------


@dataclass
class IntegralState:
    """History visible to an adapted integrand at step k (never the future)."""

    k: int
    t: float
    z_hist: np.ndarray  # (n_paths, k) draws already revealed
    driver: np.ndarray  # (n_paths,) partial sum of the draws
    integral: np.ndarray  # (n_paths,) current value of the integral


IntegrandRule = Callable[[IntegralState], np.ndarray]


def deterministic_rule(values: Sequence[float]) -> IntegrandRule:
    vals = [float(v) for v in values]

    def rule(state: IntegralState) -> np.ndarray:
        return np.full(state.driver.shape, vals[state.k])

    return rule


def driver_rule(fn: Callable[[float, np.ndarray], np.ndarray]) -> IntegrandRule:
    """H_k = fn(t_k, W_{t_k}) with W the running sum of the draws."""

    def rule(state: IntegralState) -> np.ndarray:
        return np.asarray(fn(state.t, state.driver), dtype=float)

    return rule


def integral_rule(fn: Callable[[float, np.ndarray], np.ndarray]) -> IntegrandRule:
    """H_k = fn(t_k, X_k) with X the integral built so far."""

    def rule(state: IntegralState) -> np.ndarray:
        return np.asarray(fn(state.t, state.integral), dtype=float)

    return rule


def stoch_integral_batch(
    rule: IntegrandRule, increments: np.ndarray, times: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Partial sums X_k = sum_{l<=k} H_{l-1} Z_l; returns (paths, H values).

    ``increments`` has shape (n_paths, n); H values come out (n_paths, n).
    """
    z = np.asarray(increments, dtype=float)
    n_paths, n = z.shape
    ts = np.arange(n, dtype=float) if times is None else np.asarray(times, dtype=float)
    x = np.zeros(n_paths)
    s = np.zeros(n_paths)
    out = np.empty((n_paths, n + 1), dtype=float)
    out[:, 0] = 0.0
    hs = np.empty((n_paths, n), dtype=float)
    for k in range(n):
        h = rule(IntegralState(k=k, t=float(ts[k]), z_hist=z[:, :k], driver=s, integral=x))
        hs[:, k] = h
        x = x + h * z[:, k]
        s = s + z[:, k]
        out[:, k + 1] = x
    return out, hs


def discrete_stoch_integral(
    H_rule: Callable[[int, np.ndarray], float],
    specs: Sequence[InnovationSpec],
    stream: RngStream,
) -> Path:
    """Single-path integral; the rule sees only the draws Z_{1:k} already made."""
    n = len(specs)
    z = np.array([spec.sample(stream) for spec in specs])

    def rule(state: IntegralState) -> np.ndarray:
        return np.array([float(H_rule(state.k, state.z_hist[0]))])

    vals, _ = stoch_integral_batch(rule, z[None, :])
    return Path(GridSpec(n, float(n)), vals[0])


def doleans_batch(
    rule: IntegrandRule, grid: GridSpec, normals: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Multiplicative scheme Xi_k = Xi_{k-1} exp(H ΔW - dt H^2 / 2), Xi_0 = 1."""
    z = np.asarray(normals, dtype=float)
    n_paths, n = z.shape
    if n != grid.n:
        raise ValueError("normals must have grid.n columns")
    dt = grid.dt
    dw = math.sqrt(dt) * z
    logxi = np.zeros(n_paths)
    s = np.zeros(n_paths)
    out = np.empty((n_paths, n + 1), dtype=float)
    out[:, 0] = 1.0
    hs = np.empty((n_paths, n), dtype=float)
    for k in range(n):
        h = rule(IntegralState(k=k, t=k * dt, z_hist=dw[:, :k], driver=s, integral=logxi))
        hs[:, k] = h
        logxi = logxi + h * dw[:, k] - 0.5 * dt * h * h
        s = s + dw[:, k]
        out[:, k + 1] = np.exp(logxi)
    return out, hs


def doleans_discrete(
    h_rule: Callable[[int, np.ndarray], float], grid: GridSpec, stream: RngStream
) -> Path:
    z = stream.gen.standard_normal(grid.n)

    def rule(state: IntegralState) -> np.ndarray:
        return np.array([float(h_rule(state.k, state.z_hist[0]))])

    vals, _ = doleans_batch(rule, grid, z[None, :])
    return Path(grid, vals[0])


# -- batch path I/O ------------------------------------------------------------


def write_path_batch(path, values: np.ndarray) -> None:
    """Binary batch format: magic 'CVXPATH1', two uint64 dims, float64 rows (LE)."""
    arr = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    if arr.ndim != 2:
        raise ValueError("values must be a 2-d (paths x (n+1)) array")
    with open(path, "wb") as fh:
        fh.write(PATH_MAGIC)
        fh.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_path_batch(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != PATH_MAGIC:
            raise ValueError(f"not a CVXPATH1 file (magic {magic!r})")
        rows, cols = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8")
    return data.reshape(rows, cols).astype(float)
