"""
Counter-based random streams.

Every stream is a Philox generator keyed by (seed, *stream ids) through a
SeedSequence, so streams for different cells or replications never depend on
the order in which they are consumed.
"""
from typing import Optional

import numpy as np

from app.config import settings


def make_rng(seed: Optional[int] = None, *stream: int) -> np.random.Generator:
    root = settings.DEFAULT_SEED if seed is None else int(seed)
    sequence = np.random.SeedSequence([root, *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(sequence))
