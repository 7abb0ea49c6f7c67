"""Reproducible counter-based random streams.

Every Monte Carlo loop in the package draws from a :class:`RandomSource`.
Samples are produced in fixed-size chunks, and chunk ``c`` of a source is
generated by a Philox generator keyed by ``(seed, child stream c)``.  Sample
``i`` therefore depends only on ``(seed, stream, i)``; chunks can be evaluated
in any order or in parallel and give identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHUNK = 4096
_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RandomSource:
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) <= _MASK):
            raise ValueError("seed must be a 64-bit unsigned integer")

    def generator(self) -> np.random.Generator:
        key = np.array([int(self.seed) & _MASK, int(self.stream) & _MASK], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RandomSource":
        """Independent sub-stream, a pure function of (seed, stream, index)."""
        mixed = _splitmix64((int(self.stream) * 0x100000001B3) ^ _splitmix64(int(index) + 1))
        return RandomSource(self.seed, mixed)

    def children(self, count: int) -> list["RandomSource"]:
        return [self.child(i) for i in range(count)]

    # -- sample-indexed draws -------------------------------------------------

    def _chunked(self, draw, start: int, count: int, width: int) -> np.ndarray:
        out = []
        i = start
        stop = start + count
        while i < stop:
            c, r = divmod(i, CHUNK)
            block = draw(self.child(c).generator(), (CHUNK, width))
            take = min(CHUNK - r, stop - i)
            out.append(block[r:r + take])
            i += take
        if not out:
            return np.empty((0, width))
        return np.concatenate(out, axis=0)

    def signs(self, count: int, width: int, start: int = 0) -> np.ndarray:
        """Rademacher signs, rows indexed by global sample index."""
        return self._chunked(
            lambda g, shape: g.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0,
            start, count, width,
        )

    def normals(self, count: int, width: int, start: int = 0) -> np.ndarray:
        """Standard normal samples, rows indexed by global sample index."""
        return self._chunked(lambda g, shape: g.standard_normal(shape), start, count, width)


def as_source(rng) -> RandomSource:
    """Coerce ``None``, an int seed, or a RandomSource into a RandomSource."""
    if rng is None:
        return RandomSource(0, 0)
    if isinstance(rng, RandomSource):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RandomSource(int(rng), 0)
    raise TypeError(f"cannot interpret {rng!r} as a RandomSource")
