"""
Seed derivation and random streams.

Every stream is a numpy Generator on the Philox-4x64 counter-based bit generator,
so a given integer seed produces the same draws on every platform. Trial seeds are
derived by hashing the cell coordinates, never by drawing from a parent stream,
which keeps each record independent of execution order and shard count.
"""

import hashlib

import numpy as np


def derive_seed(master_seed: int, *coords) -> int:
    """63-bit seed from a master seed and any tuple of cell coordinates"""
    key = "|".join(str(c) for c in (master_seed, *coords))
    digest = hashlib.md5(key.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def trial_rng(master_seed: int, s: int, o: int, rep: int) -> tuple[int, np.random.Generator]:
    seed = derive_seed(master_seed, s, o, rep)
    return seed, make_rng(seed)
