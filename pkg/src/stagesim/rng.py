"""Deterministic RNG substreams.

Every stochastic component takes a ``numpy.random.Generator``. Substreams are
derived from a scenario seed plus string tags, so results do not depend on the
order in which subsystems draw numbers or on thread scheduling.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_key(tag: str) -> int:
    # zlib.crc32 is stable across processes; built-in hash() is not.
    return zlib.crc32(tag.encode("utf-8")) & 0xFFFFFFFF


def substream(seed: int, *tags: object) -> np.random.Generator:
    """Return an independent generator for (seed, tags).

    The same (seed, tags) always yields the same stream; distinct tags yield
    statistically independent streams.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    entropy.extend(_tag_key(str(t)) for t in tags)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
