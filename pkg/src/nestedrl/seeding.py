"""Deterministic seed derivation.

All randomness in the package flows through numpy Generators created from
SeedSequence entropy tuples (master seed, stream tag, index...), so any
component can be re-run or parallelized without perturbing the others.
"""

from __future__ import annotations

import numpy as np

TAG_DATA = 1
TAG_SPLIT = 2
TAG_TRAIN = 3
TAG_EVAL = 4
TAG_PROBE = 5
TAG_ATTRIBUTE = 6
TAG_RELABEL = 7


def child_rng(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for the stream identified by (seed, *path)."""
    return np.random.default_rng(np.random.SeedSequence((int(seed), *map(int, path))))


def derive_seed(seed: int, *path: int) -> int:
    """Stable 32-bit integer seed for the stream identified by (seed, *path)."""
    return int(np.random.SeedSequence((int(seed), *map(int, path))).generate_state(1)[0])
