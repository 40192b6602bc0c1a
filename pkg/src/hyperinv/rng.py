"""Seed derivation by labeled hashing.

Every random stream in a run is keyed by (master seed, labels...), so adding
a sweep point or a task never shifts the draws seen by the others.
"""
import hashlib

import numpy as np


def derive_seed(seed, *labels):
    key = "/".join([str(int(seed))] + [str(x) for x in labels])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


def stream(seed, *labels):
    return np.random.default_rng(derive_seed(seed, *labels))
