"""Deterministic, splittable random streams.

Each named role (positions, momenta, bootstrap, ...) gets an independent
Philox substream derived from (master seed, crc32(role)), so adding draws to
one role never shifts another, and results are identical for a fixed seed no
matter how the work is batched.
"""
from __future__ import annotations

import zlib

import numpy as np


def rng_for(seed: int, role: str) -> np.random.Generator:
    """Independent generator for (seed, role)."""
    key = zlib.crc32(role.encode("utf8"))
    ss = np.random.SeedSequence(int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))
