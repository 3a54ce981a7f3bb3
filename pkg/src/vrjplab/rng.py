"""Seed lanes.

Every random stream is keyed by ``(master seed, module, case, replica)`` and
backed by the counter-based Philox generator, so a stream never depends on
how work is scheduled across threads.
"""

from __future__ import annotations

import numpy as np

MODULES = {
    "graph": 0,
    "vrjp": 1,
    "sigma_hn": 2,
    "sigma_h22": 3,
    "grassmann": 4,
    "dynkin": 5,
    "merminwagner": 6,
    "cli": 7,
}


def lane(seed: int, module: str, case: int = 0, replica: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(MODULES[module], int(case), int(replica)))
    return np.random.Generator(np.random.Philox(ss))


def kernel_seed(rng: np.random.Generator) -> int:
    """A 32-bit seed for a compiled kernel, drawn from ``rng``."""
    return int(rng.integers(0, 2**32 - 1))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(rng)))
