"""Counter-based random streams for reproducible parallel simulation.

Every (seed, scenario, replicate, purpose) tuple keys its own Philox
stream, so replicates draw independent, reproducible variates no matter
how work is distributed across processes. Purposes separate the draws
within one replicate (covariates, response noise, fold shuffles).
"""

from __future__ import annotations

import numpy as np

PURPOSE_COVARIATES = 0
PURPOSE_RESPONSE = 1
PURPOSE_CV = 2
PURPOSE_NODEWISE = 3

_MASK64 = (1 << 64) - 1


def stream(seed: int, scenario: int, replicate: int, purpose: int) -> np.random.Generator:
    """Generator for one (scenario, replicate, purpose) cell of a run."""
    if not (0 <= scenario < 1 << 24):
        raise ValueError(f"scenario index {scenario} outside 0..2^24-1")
    if not (0 <= replicate < 1 << 32):
        raise ValueError(f"replicate index {replicate} outside 0..2^32-1")
    if not (0 <= purpose < 1 << 8):
        raise ValueError(f"purpose code {purpose} outside 0..255")
    key = np.array(
        [int(seed) & _MASK64, (scenario << 40) | (replicate << 8) | purpose],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, scenario: int, replicate: int, purpose: int) -> int:
    """A plain integer seed drawn from the keyed stream (for fold shuffles)."""
    return int(stream(seed, scenario, replicate, purpose).integers(0, 1 << 63))
