"""Named random streams derived from a single root seed.

Each consumer (training, pair sampling, permutations, data generation) draws
from its own stream, so enlarging one experiment never shifts the draws of
another.
"""
import zlib

import numpy as np


def _key(name):
    return zlib.crc32(str(name).encode("utf-8"))


def stream(root_seed, *names):
    """Return a ``SeedSequence`` for the stream identified by ``names``."""
    return np.random.SeedSequence(int(root_seed), spawn_key=tuple(_key(n) for n in names))


def derive_seed(root_seed, *names):
    """Return a 31-bit integer seed for the named stream."""
    return int(stream(root_seed, *names).generate_state(1, dtype=np.uint32)[0] >> 1)


def rng(root_seed, *names):
    return np.random.default_rng(stream(root_seed, *names))
