"""Label-derived random streams.

Every consumer (factor init, shuffling, bound trials, ...) draws from its
own generator seeded by ``(root_seed, crc32(label))``, so adding a new
consumer never shifts the numbers another one sees.
"""

import zlib

import numpy as np

DEFAULT_SEED = 42


def rng_for(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(label.encode())])


def child_seed(seed: int, label: str) -> int:
    """A 63-bit integer seed derived from ``seed`` and ``label``."""
    return int(rng_for(seed, label).integers(0, 2**63 - 1))
