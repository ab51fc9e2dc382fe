"""Deterministic seeding utilities.

All randomness flows through counter-based Philox generators keyed by a
SeedSequence. Replication k of a run with master seed s uses
SeedSequence(entropy=s, spawn_key=(k,)), so replications are independent,
reproducible, and identical no matter how work is distributed across workers.
"""

from __future__ import annotations

import numpy as np


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def replication_generator(master_seed: int, rep_index: int) -> np.random.Generator:
    """The documented master-seed splitter: one substream per replication."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(rep_index,))
    return np.random.Generator(np.random.Philox(ss))


def child_generator(gen: np.random.Generator, tag: int) -> np.random.Generator:
    """Derive an independent substream from a generator's bit stream."""
    key = gen.integers(0, 2**63 - 1, dtype=np.int64)
    ss = np.random.SeedSequence(entropy=int(key), spawn_key=(tag,))
    return np.random.Generator(np.random.Philox(ss))
