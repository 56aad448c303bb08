"""Seeded random streams.

Every Monte Carlo trial draws from its own generator, derived from the master
seed and the trial's grid indices, so results never depend on how trials are
scheduled across workers.
"""
from __future__ import annotations

import numpy as np
from numpy.random import Generator


def derive_rng(seed: int, *indices: int) -> Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(i) for i in indices)]))
