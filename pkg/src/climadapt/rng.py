"""
Seeded random streams.

Every stochastic component draws from its own `numpy.random.Generator` backed
by PCG64. A stream is identified by (master seed, purpose, seed): the master
seed is the SeedSequence entropy and (purpose, seed) its spawn key, so streams
for different purposes or episodes never overlap and are reproducible on any
platform numpy supports.
"""

from enum import IntEnum

import numpy as np

from .exceptions import DomainError


class StreamPurpose(IntEnum):
    """Spawn-key namespace of a stream."""

    RAIN = 0
    EXPLORATION = 1
    POLICY = 2
    EPISODE_SEEDS = 3
    SURVEY = 4


def make_stream(
    master_seed: int, purpose: StreamPurpose, seed: int = 0
) -> np.random.Generator:
    """Returns the generator for (master_seed, purpose, seed)."""
    if master_seed < 0 or seed < 0:
        raise DomainError(f"seeds must be non-negative integers, got {master_seed}, {seed}")
    sequence = np.random.SeedSequence(
        entropy=master_seed, spawn_key=(int(purpose), seed)
    )
    return np.random.Generator(np.random.PCG64(sequence))


def derive_seeds(
    master_seed: int,
    count: int,
    purpose: StreamPurpose = StreamPurpose.EPISODE_SEEDS,
    seed: int = 0,
) -> list[int]:
    """Derives `count` non-negative 32-bit seeds, e.g. one per training episode."""
    if master_seed < 0 or seed < 0:
        raise DomainError(f"seeds must be non-negative integers, got {master_seed}, {seed}")
    sequence = np.random.SeedSequence(
        entropy=master_seed, spawn_key=(int(purpose), seed)
    )
    return [int(s) for s in sequence.generate_state(count, dtype=np.uint32)]
