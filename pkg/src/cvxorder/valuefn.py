"""Piecewise-linear value functions on state grids.

Interpolation is affine between nodes and extrapolation continues the boundary
chords, so interpolating convex node values always yields a convex function.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


def interp_chord(grid: np.ndarray, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation with chord-slope linear extrapolation."""
    y = np.interp(x, grid, values)
    if grid.size >= 2:
        left = x < grid[0]
        if np.any(left):
            s = (values[1] - values[0]) / (grid[1] - grid[0])
            y = np.where(left, values[0] + s * (x - grid[0]), y)
        right = x > grid[-1]
        if np.any(right):
            s = (values[-1] - values[-2]) / (grid[-1] - grid[-2])
            y = np.where(right, values[-1] + s * (x - grid[-1]), y)
    return y


@dataclass
class ValueFunction:
    """Sampled function on a strictly increasing grid, interpolated affinely."""

    grid: np.ndarray
    values: np.ndarray
    growth_exponent_r: float = 1.0

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if self.grid.size < 2:
            raise ValueError("need at least two grid nodes")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        out = interp_chord(self.grid, self.values, np.atleast_1d(arr))
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.grid)

    def convexity_defect(self) -> float:
        """Most negative slope increment; >= -tol certifies discrete convexity."""
        s = self.slopes()
        return float(np.min(np.diff(s))) if s.size >= 2 else 0.0

    def is_convex(self, tol: float = 1e-12) -> bool:
        return self.convexity_defect() >= -tol

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["grid", "value"])
            for g, v in zip(self.grid, self.values):
                writer.writerow([repr(float(g)), repr(float(v))])


def make_state_grid(
    center: float,
    half_width: float,
    points: int = 513,
    cluster: float = 3.0,
    extra: tuple[float, ...] = (),
) -> np.ndarray:
    """Grid spanning ``center +- half_width``, geometrically refined near the center.

    ``extra`` points (strikes, start values) falling inside the span are
    inserted exactly; near-duplicates are merged.
    """
    if points < 2:
        raise ValueError("points must be >= 2")
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    t = np.linspace(-1.0, 1.0, int(points))
    xs = center + half_width * np.sinh(cluster * t) / np.sinh(cluster)
    keep = [float(e) for e in extra if xs[0] < e < xs[-1]]
    keep.append(float(center))
    xs = np.union1d(xs, np.asarray(keep))
    tol = 1e-12 * max(1.0, abs(center) + half_width)
    mask = np.concatenate([[True], np.diff(xs) > tol])
    return xs[mask]
