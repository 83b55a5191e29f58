"""Named RNG streams derived from one experiment seed.

Every module draws from `stream(seed, "its", "own", "name")`, so adding a
new consumer never perturbs the draws of an existing one. Names are hashed
with sha256 (stable across platforms and interpreter runs, unlike
``hash()``).
"""
from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, *names) -> np.random.Generator:
    label = "/".join(str(n) for n in names)
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *words]))


def substream_seed(seed: int, *names) -> int:
    """Collapse a named stream to a single integer seed (for sub-experiments)."""
    return int(stream(seed, *names).integers(0, 2**31 - 1))
