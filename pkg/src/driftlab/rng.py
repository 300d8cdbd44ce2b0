"""Reproducible random streams.

Every stream is addressed by ``(master_seed, purpose, index)``. The address is
turned into a :class:`numpy.random.SeedSequence` spawn key and drives a Philox
counter-based generator, so replicate ``i`` always sees the same numbers no
matter how replicates are split across workers.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "streams", "purpose_key"]


def purpose_key(purpose: str) -> int:
    """Stable 32-bit integer for a purpose tag (``hash()`` is salted per process)."""
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    if seed is None:
        raise ValueError("a seed is required; wall-clock seeding is not supported")
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=(purpose_key(purpose), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def streams(seed: int, purpose: str, indices) -> list[np.random.Generator]:
    return [stream(seed, purpose, i) for i in indices]
