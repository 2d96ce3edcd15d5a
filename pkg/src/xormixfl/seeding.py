"""Named random sub-streams derived from one master seed.

Every component draws from its own generator, keyed by a stream name such as
``"partition"`` or ``"device/2"``, so that any piece of a run can be replayed
in isolation.
"""

import hashlib
import struct

import numpy as np


def substream_seed(master_seed: int, name: str) -> int:
    """64-bit seed for stream ``name`` under ``master_seed``."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", int(master_seed) % 2**64))
    h.update(name.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def substream(master_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(substream_seed(master_seed, name))
