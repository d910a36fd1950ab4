"""Seeded random streams.

Every stochastic consumer draws from ``stream(seed, purpose, index)``, a PCG64
generator keyed by the run seed, a purpose tag and an instance index.  Each
instance owns its stream, so results do not depend on evaluation order or on
how work is split across threads.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _tag(purpose), int(index)])
    return np.random.Generator(np.random.PCG64(seq))
