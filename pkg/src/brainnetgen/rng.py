"""Explicitly seeded random streams.

Every stage of the pipeline takes a :class:`SeededRng` (or a seed) rather than
touching global state. Child streams are derived by name so that one stage can
be re-run without replaying the draws of another.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def child_seed(seed: int, name: str) -> int:
    """Derive a 64-bit seed from a parent seed and a stage name.

    The split is ``sha256(f"{seed}:{name}")`` truncated to its first 8 bytes,
    read big-endian. It is stable across platforms and Python versions.
    """
    digest = hashlib.sha256(f"{int(seed) & _MASK64}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class SeededRng:
    """Thin wrapper over a PCG64 generator with a recorded seed."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, name: str) -> "SeededRng":
        return SeededRng(child_seed(self.seed, name))

    def uniform(self, size=None) -> np.ndarray | float:
        return self._gen.random(size)

    def bernoulli(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return (self._gen.random(p.shape) < p).astype(np.uint8)

    def normal(self, size=None, scale: float = 1.0):
        return self._gen.normal(0.0, scale, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self._gen.integers(low, high, size)

    def shuffle(self, items: list) -> list:
        """Return a shuffled copy of ``items``."""
        idx = self._gen.permutation(len(items))
        return [items[i] for i in idx]

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def glorot(self, rows: int, cols: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (rows + cols))
        return self._gen.uniform(-limit, limit, size=(rows, cols))
