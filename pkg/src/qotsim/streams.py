"""Named, counter-based random streams derived from a single root seed.

Every stochastic component draws from its own stream, addressed by a path of
names and indices. Streams are independent of how many other streams exist,
so adding trials or reordering draws never perturbs earlier randomness.
"""

import zlib

import numpy as np


def stream_seed(root_seed, *path):
    """SeedSequence for a purpose path like ("trial", 7, "channel")."""
    key = tuple(
        zlib.crc32(p.encode("utf-8")) if isinstance(p, str) else int(p)
        for p in path
    )
    return np.random.SeedSequence(entropy=root_seed, spawn_key=key)


def stream(root_seed, *path):
    """Generator dedicated to the given purpose path under the root seed."""
    return np.random.default_rng(stream_seed(root_seed, *path))
