"""Named random streams derived from a single master seed.

A stream is identified by ``(master_seed, tag, *indices)``; the same identity
always yields the same generator, independent of what else has been drawn.
"""

import zlib

import numpy as np


def _tag_key(tag):
    return zlib.crc32(tag.encode("utf-8"))


def stream(master_seed, tag, *indices):
    """Return a fresh ``numpy.random.Generator`` for the named stream."""
    if master_seed < 0 or any(i < 0 for i in indices):
        raise ValueError("seeds and stream indices must be non-negative")
    seq = np.random.SeedSequence([int(master_seed), _tag_key(tag), *map(int, indices)])
    return np.random.default_rng(seq)


def child_seed(master_seed, tag, *indices):
    """Derive a plain integer seed (for APIs that take ``seed: int``)."""
    return int(stream(master_seed, tag, *indices).integers(0, 2**63 - 1))
