"""Deterministic random sub-streams for every randomized operation.

Each randomized operation draws from an independent stream derived from
(seed, operation code, item indices), so results are stable under
reordering and safe to parallelize.  Operation codes are fixed integers
rather than hashed names: Python string hashing is salted per process.
"""
from __future__ import annotations

import numpy as np

OP_SPLIT = 1
OP_UPSAMPLE = 2
OP_AUGMENT = 3
OP_LINEAR_TRAIN = 4
OP_ENCODER_INIT = 5
OP_ENCODER_TRAIN = 6
OP_ADAPTER_INIT = 7

_MASK64 = (1 << 64) - 1


def substream(seed: int, op_code: int, *keys: int) -> np.random.Generator:
    """Generator for operation `op_code` under `seed`, specialized by `keys`."""
    entropy = (int(seed) & _MASK64, int(op_code)) + tuple(int(k) & _MASK64 for k in keys)
    return np.random.default_rng(np.random.SeedSequence(entropy))
