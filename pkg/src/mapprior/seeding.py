"""Deterministic RNG derivation.

Every stage of a run draws from its own stream, derived from one master seed
and a stage label. Re-ordering stages therefore never shifts another stage's
randomness.
"""
from __future__ import annotations

import zlib

import numpy as np


def derive_seed(master_seed: int, *labels: str | int) -> np.random.SeedSequence:
    """Build a SeedSequence keyed by the master seed and stage labels."""
    words = [int(master_seed) & 0xFFFFFFFF]
    for label in labels:
        if isinstance(label, int):
            words.append(label & 0xFFFFFFFF)
        else:
            words.append(zlib.crc32(label.encode("utf-8")))
    return np.random.SeedSequence(words)


def derive_rng(master_seed: int, *labels: str | int) -> np.random.Generator:
    """Generator for one named stage of a seeded run."""
    return np.random.default_rng(derive_seed(master_seed, *labels))
