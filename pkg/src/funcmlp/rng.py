"""Counter-based random streams.

Every draw in the package comes from a Philox-4x64 generator. The 128-bit key
is ``(seed, stream_tag)`` where ``stream_tag`` is a stable 64-bit hash of a
stream name such as ``"train/curves"``; the item index is written into the
third counter word. Draws for item ``i`` therefore never depend on how many
other items were drawn or in which order, and distinct names give disjoint
streams.
"""

import hashlib

import numpy as np


def stream_tag(name: str) -> int:
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Generator for item ``index`` of the named stream under ``seed``."""
    if index < 0:
        raise ValueError("index must be non-negative")
    key = [int(seed) % 2**64, stream_tag(name)]
    counter = [0, 0, int(index) % 2**64, 0]
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
