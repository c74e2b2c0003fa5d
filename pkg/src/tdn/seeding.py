"""Named, reproducible random substreams derived from one global seed."""

import zlib

import numpy as np


def substream(seed, name):
    """Return a Generator for stream ``name`` under global ``seed``.

    Streams with different names are statistically independent, and the
    mapping is stable across processes and platforms (crc32, not ``hash``).
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))
