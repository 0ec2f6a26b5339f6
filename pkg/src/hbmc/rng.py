"""Counter-based random streams for reproducible, worker-independent sampling.

Streams are keyed by (seed, stream_id) on top of the Philox counter-based
generator: identical keys reproduce identical draws, distinct stream ids
give statistically independent streams, and no coordination between workers
is needed.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """A (seed, stream_id)-keyed random stream."""

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= int(seed) < 2 ** 64):
            raise ValueError("seed must fit in 64 bits")
        if not (0 <= int(stream_id) < 2 ** 64):
            raise ValueError("stream_id must fit in 64 bits")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._gen = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array([self.seed, self.stream_id], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream or a bare numpy Generator."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")
