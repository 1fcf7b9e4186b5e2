"""Named, index-addressed random streams derived from one master seed.

Every random draw in the pipeline comes from ``stream(master_seed, name, index)``
so an item's randomness never depends on how many items came before it or on
which worker processed it.
"""
from __future__ import annotations

import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def seed_sequence(master_seed: int, name: str, *index: int) -> np.random.SeedSequence:
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    return np.random.SeedSequence(entropy=int(master_seed),
                                  spawn_key=(_name_key(name), *map(int, index)))


def stream(master_seed: int, name: str, *index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, name, *index)))


def derive_seed(master_seed: int, name: str, *index: int) -> int:
    """A 64-bit integer seed for a sub-stream, suitable for storing in records."""
    return int(seed_sequence(master_seed, name, *index).generate_state(1, dtype=np.uint64)[0])


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))
