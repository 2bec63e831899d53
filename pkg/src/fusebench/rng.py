"""Named random sub-streams derived from one run seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, *names: str | int) -> np.random.Generator:
    """Independent generator for ``(seed, names...)``; stable across platforms and runs."""
    key = tuple(zlib.crc32(n.encode("utf-8")) if isinstance(n, str) else int(n) for n in names)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
