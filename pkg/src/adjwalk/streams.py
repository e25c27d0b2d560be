"""Counter-based RNG streams: one independent Philox stream per trajectory."""

from __future__ import annotations

import numpy as np

__all__ = ["seed_stream"]


def seed_stream(master_seed: int, index: int) -> np.random.Generator:
    """Deterministic stream i of a master seed, independent across indices.

    Philox keys are (master, index) pairs, so the stream depends only on
    the two integers and never on scheduling order.
    """
    return np.random.Generator(np.random.Philox(key=np.array([master_seed, index], dtype=np.uint64)))
