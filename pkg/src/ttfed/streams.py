"""Counter-based random sub-streams keyed by (master seed, purpose, ...).

A stream depends only on its key, never on how many draws other streams
made, so results do not change with execution order.
"""
from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    PLACEMENT = 0
    CPU = 1
    PARTITION = 2
    INIT = 3
    TRAIN = 4
    FADING = 5
    DATA = 6


def substream(seed: int, purpose: Purpose, *key: int) -> np.random.Generator:
    entropy = [int(seed), int(purpose), *(int(k) for k in key)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
