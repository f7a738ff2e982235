"""Seeded, order-independent random streams.

Every draw is keyed by the root seed plus a path of labels, so the stream a
component sees does not depend on which other components ran first.
"""

from __future__ import annotations

import zlib

import numpy as np

MAX_SEED = 2**64 - 1


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & MAX_SEED
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, *path) -> np.random.Generator:
    """Philox generator for ``(seed, *path)``."""
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, *map(_key, path)])
    return np.random.Generator(np.random.Philox(ss))
