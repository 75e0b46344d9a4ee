"""Named, independent random streams derived from one user seed.

Each consumer asks for ``stream(seed, "purpose", *ids)``; adding a new
purpose never shifts the draws another purpose sees.
"""
import zlib

import numpy as np

MAX_SEED = 2**64 - 1


def stream(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    tag = zlib.crc32(purpose.encode("utf-8"))
    key = (tag,) + tuple(int(k) for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def derive_seed(seed: int, purpose: str, *keys: int) -> int:
    """A 64-bit seed for a sub-component, drawn from its own stream."""
    return int(stream(seed, purpose, *keys).integers(0, MAX_SEED, dtype=np.uint64, endpoint=True))
