"""Reproducible random streams.

All randomness flows through Philox-4x64 (counter-based, 64-bit words), keyed
by a ``SeedSequence`` built from ``(master seed, replicate index, purpose tag)``.
Tags are hashed with CRC-32 so the key does not depend on Python's salted
``hash``. Streams with different tags or replicate indices are independent,
and the draws do not depend on the order in which streams are created.
"""

import zlib

import numpy as np


def _tag_code(tag):
    return zlib.crc32(tag.encode("utf-8"))


def stream(master_seed, replicate, tag):
    seq = np.random.SeedSequence(entropy=int(master_seed) & (2 ** 64 - 1),
                                 spawn_key=(int(replicate), _tag_code(tag)))
    return np.random.Generator(np.random.Philox(seq))
