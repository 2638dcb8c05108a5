"""Seeded, splittable random streams.

Every Monte Carlo draw in the package comes from numpy's PCG64 bit generator
seeded through ``SeedSequence(seed, spawn_key=(chunk,))``.  Work is cut into
fixed-size chunks and chunk ``k`` always uses stream ``k``, so the output is
bit-identical whatever the number of worker threads.
"""

from __future__ import annotations

import numpy as np

CHUNK_SIZE = 1 << 16


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator number ``index`` derived from ``seed``."""
    if seed < 0 or index < 0:
        raise ValueError("seed and stream index must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def chunk_sizes(count: int, chunk: int = CHUNK_SIZE) -> list[int]:
    """Sizes of the consecutive chunks covering ``count`` draws."""
    full, rest = divmod(int(count), chunk)
    return [chunk] * full + ([rest] if rest else [])


def reference_outputs(seed: int = 20240611, count: int = 4) -> list[int]:
    """First raw 64-bit outputs of stream 0 for ``seed``; published for ports."""
    bits = np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,)))
    return [int(x) for x in bits.random_raw(count)]
