"""Counter-based random streams derived from one master seed.

Every consumer asks for a stream by a key such as ``("boot", h)``; the
stream depends only on ``(seed, key)`` so results do not depend on the
order or the thread in which replicates run.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["PURPOSE", "derive_seed", "stream"]

# stable integer tags for stream purposes
PURPOSE = {"block": 1, "boot": 2, "guess": 3, "restart": 4, "wic": 5, "spike": 6, "sim": 7, "meat": 8}


def _key(parts) -> tuple[int, ...]:
    out = []
    for p in parts:
        if isinstance(p, str):
            out.append(PURPOSE.get(p, zlib.crc32(p.encode())))
        else:
            out.append(int(p))
    return tuple(out)


def stream(seed: int, *key) -> np.random.Generator:
    """Philox generator for ``(seed, key)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_key(key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key) -> int:
    """64-bit child seed for ``(seed, key)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_key(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
