"""Counter-based child RNG streams keyed by (base_seed, role, indices).

Streams depend only on their key, never on creation order, so results do not
change with the number of workers or the order in which trials run.
"""
from __future__ import annotations

import zlib

import numpy as np


def _role_id(role: str) -> int:
    return zlib.crc32(role.encode("utf-8"))


def seed_sequence(base_seed: int, role: str, *indices: int) -> np.random.SeedSequence:
    key = (_role_id(role),) + tuple(int(i) for i in indices)
    return np.random.SeedSequence(int(base_seed), spawn_key=key)


def derive_rng(base_seed: int, role: str, *indices: int) -> np.random.Generator:
    """Independent generator for ``role`` at position ``indices``."""
    return np.random.default_rng(seed_sequence(base_seed, role, *indices))


def derive_int(base_seed: int, role: str, *indices: int) -> int:
    """A 63-bit integer seed drawn from the same keyed stream."""
    return int(seed_sequence(base_seed, role, *indices).generate_state(1, np.uint64)[0] >> 1)
