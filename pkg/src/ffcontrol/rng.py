"""Counter-based random streams for reproducible trajectory ensembles.

Each trajectory owns an independent Philox stream keyed by
(master_seed, trajectory_index), so ensembles are bit-reproducible no
matter how trajectories are scheduled across workers, and any single
trajectory can be replayed in isolation.
"""

from __future__ import annotations

import numpy as np

__all__ = ["trajectory_rng", "spawn_stream_key"]

_MASK64 = (1 << 64) - 1


def spawn_stream_key(master_seed: int, trajectory_index: int) -> tuple:
    if trajectory_index < 0:
        raise ValueError("trajectory index must be non-negative")
    return (int(master_seed) & _MASK64, int(trajectory_index) & _MASK64)


def trajectory_rng(master_seed: int, trajectory_index: int) -> np.random.Generator:
    """Generator whose stream depends only on (master_seed, trajectory_index)."""
    key = spawn_stream_key(master_seed, trajectory_index)
    return np.random.Generator(np.random.Philox(key=key))
