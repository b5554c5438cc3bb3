"""Seed derivation.

Every random stream in the package descends from one 64-bit master seed.
Child seeds are produced by chaining the SplitMix64 finaliser over the
master seed and a tuple of integer keys (chain index, replica index, ...),
so that streams are reproducible and do not depend on execution order.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One SplitMix64 step: advance by the golden gamma and finalise."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *keys: int) -> int:
    """Mix ``master`` with ``keys`` into a new 64-bit seed.

    ``derive_seed(m, i, j)`` is ``splitmix64(splitmix64(splitmix64(m) ^ i) ^ j)``.
    Keys must be non-negative integers.
    """
    h = splitmix64(int(master) & MASK64)
    for k in keys:
        if k < 0:
            raise ValueError("seed keys must be non-negative")
        h = splitmix64(h ^ (int(k) & MASK64))
    return h


def make_rng(master: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, *keys)))


# fixed key namespaces so that different components never share a stream
STREAM_DATA = 1
STREAM_PRIOR = 2
STREAM_CHAIN = 3
STREAM_INIT = 4
STREAM_TENSOR = 5
STREAM_IS = 6
STREAM_PROBE = 7
