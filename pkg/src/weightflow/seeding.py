"""Named random sub-streams derived from one root seed."""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("simulate", "init", "train", "eval")


def substream(seed: int, name: str, *extra: int) -> np.random.SeedSequence:
    """Independent SeedSequence for stream ``name`` (any string; the CRC32 of it is the key)."""
    return np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode()), *extra))


def subseed(seed: int, name: str, *extra: int) -> int:
    return int(substream(seed, name, *extra).generate_state(1, dtype=np.uint32)[0])


def rng(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(substream(seed, name, *extra))
