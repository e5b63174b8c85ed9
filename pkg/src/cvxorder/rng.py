"""Counter-based random streams.

Every stream is keyed by ``(seed, stream_id)`` through the Philox bit
generator, so path ``j`` always sees the same draws no matter in which order
(or on which thread) paths are simulated.  Batch helpers fill ``(paths, cols)``
matrices block by block, one keyed stream per block, which keeps large runs
reproducible, order-independent and parallelizable.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

_U64 = (1 << 64) - 1

#: rows per keyed block in the batch helpers
BLOCK_ROWS = 1 << 15


def philox_key(seed: int, stream: int) -> int:
    """128-bit Philox key combining a global seed and a stream index."""
    return ((int(seed) & _U64) << 64) | (int(stream) & _U64)


class RngStream:
    """Single-owner random stream derived from ``(seed, stream)``.

    Instances wrap a ``numpy.random.Generator`` (attribute ``gen``); they are
    cheap to construct and must not be shared between threads.
    """

    __slots__ = ("seed", "stream", "gen")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.gen = np.random.Generator(np.random.Philox(key=philox_key(seed, stream)))

    def spawn(self, stream: int) -> "RngStream":
        """Sibling stream under the same seed."""
        return RngStream(self.seed, stream)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def _fill_blocks(
    draw: Callable[[np.random.Generator, int], np.ndarray],
    seed: int,
    n_rows: int,
    threads: int = 1,
    block_rows: int = BLOCK_ROWS,
    stream_base: int = 0,
) -> np.ndarray:
    """Assemble a (n_rows, ...) array from keyed blocks.

    ``draw(gen, rows)`` produces the rows of one block.  Block ``b`` uses the
    stream ``stream_base + b``, so the output is independent of ``threads``.
    """
    n_rows = int(n_rows)
    n_blocks = (n_rows + block_rows - 1) // block_rows

    def one(b: int) -> np.ndarray:
        rows = min(block_rows, n_rows - b * block_rows)
        gen = RngStream(seed, stream_base + b).gen
        return draw(gen, rows)

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(n_blocks)))
    else:
        parts = [one(b) for b in range(n_blocks)]
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)


def gaussian_matrix(seed: int, n_paths: int, n_cols: int, threads: int = 1) -> np.ndarray:
    """Standard-normal draws of shape (n_paths, n_cols), reproducible by block."""
    return _fill_blocks(lambda g, r: g.standard_normal((r, n_cols)), seed, n_paths, threads)


def uniform_matrix(seed: int, n_paths: int, n_cols: int, threads: int = 1) -> np.ndarray:
    """Uniform(0,1) draws of shape (n_paths, n_cols), reproducible by block."""
    return _fill_blocks(lambda g, r: g.random((r, n_cols)), seed, n_paths, threads)
