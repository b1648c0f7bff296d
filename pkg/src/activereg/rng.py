"""Counter-based random streams keyed by (master_seed, purpose, index).

Every random draw in the package goes through :func:`stream`, so a replication
gets the same numbers no matter which worker runs it or in what order.
"""

from __future__ import annotations

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def _tag_word(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(master_seed: int, tag: str, index: int = 0, *extra: int) -> np.random.Generator:
    """Philox generator for the sub-stream ``(master_seed, tag, index, *extra)``."""
    words = [master_seed & SEED_MASK, _tag_word(tag), int(index), *map(int, extra)]
    ss = np.random.SeedSequence(words)
    return np.random.Generator(np.random.Philox(ss))


def uniforms(master_seed: int, tag: str, index: int, size: int) -> np.ndarray:
    return stream(master_seed, tag, index).random(size)
