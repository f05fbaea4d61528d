"""Deterministic, splittable random number streams.

Every stochastic routine in the package draws from a counter-based Philox
generator keyed by (base seed, replica index, stream index).  Distinct
replicas get statistically independent streams, and the same key always
reproduces the same draws regardless of how many other replicas ran before.
"""

from __future__ import annotations

import numpy as np


def replica_rng(seed: int, replica: int = 0, stream: int = 0) -> np.random.Generator:
    """Return the generator for one (seed, replica, stream) key."""
    if seed < 0 or replica < 0 or stream < 0:
        raise ValueError("seed, replica and stream must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replica), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


class DrawBuffer:
    """Chunked scalar draws from a generator.

    Tight simulation loops consume one exponential or uniform variate per
    candidate point; drawing them in blocks keeps the Python overhead per
    draw small.  Refills happen at deterministic points, so the consumed
    sequence depends only on the generator key and the consumption order.
    """

    __slots__ = ("_rng", "_block", "_exp", "_exp_i", "_uni", "_uni_i")

    def __init__(self, rng: np.random.Generator, block: int = 8192):
        self._rng = rng
        self._block = block
        self._exp = rng.standard_exponential(block)
        self._exp_i = 0
        self._uni = rng.random(block)
        self._uni_i = 0

    def exponential(self) -> float:
        i = self._exp_i
        if i == self._block:
            self._exp = self._rng.standard_exponential(self._block)
            i = 0
        self._exp_i = i + 1
        return self._exp[i]

    def uniform(self) -> float:
        i = self._uni_i
        if i == self._block:
            self._uni = self._rng.random(self._block)
            i = 0
        self._uni_i = i + 1
        return self._uni[i]
