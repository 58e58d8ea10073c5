"""Named, splittable random streams on top of numpy's Philox counter generator."""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def make_rng(seed: int, *path) -> np.random.Generator:
    """Independent generator for ``(seed, *path)``.

    Identical arguments always give the identical stream, and streams for
    different paths do not overlap.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.Generator(np.random.Philox(seq))
