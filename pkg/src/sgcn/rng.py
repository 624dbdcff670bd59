"""Seeded random streams.

Every consumer of randomness draws from its own PCG64 stream, keyed by the
run seed, a purpose name and optional extra integers (e.g. the epoch), so
that changing how often one purpose draws never shifts another.
"""
import zlib

import numpy as np

STREAMS = ("init", "dropout", "shuffle", "data", "gradcheck")


def stream(seed, purpose, *extra):
    """Return an independent ``numpy.random.Generator`` for ``purpose``."""
    key = zlib.crc32(purpose.encode("utf-8"))
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, key] + [int(e) for e in extra]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
