"""
Reproducible random streams.

A stream is identified by ``(seed, run_index)`` and realised as a Philox
counter-based generator keyed by ``SeedSequence(seed, spawn_key=(run_index,))``.
Streams for different indices are statistically independent, and a batch
computed in any worker yields the same draws as in a serial loop, so merged
parallel results are bit-identical to serial ones.
"""

import numpy as np


def seed_policy(seed: int, run_index: int) -> np.random.SeedSequence:
    if seed < 0 or run_index < 0:
        raise ValueError("seed and run_index must be non-negative")
    return np.random.SeedSequence(int(seed), spawn_key=(int(run_index),))


def make_generator(seed: int, run_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_policy(seed, run_index)))
