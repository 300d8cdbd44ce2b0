"""Deterministic fan-out of replicate blocks over a thread pool.

Replicates are cut into fixed-size blocks whose boundaries do not depend on
the worker count; results come back in block order. Reductions over the
returned list therefore happen in the same order for any ``workers`` value.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

BLOCK_SIZE = 64


def default_workers() -> int:
    env = os.environ.get("DRIFTLAB_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"DRIFTLAB_WORKERS must be an integer, got {env!r}") from None
    return 1


def blocks(n: int, size: int = BLOCK_SIZE) -> list[range]:
    return [range(lo, min(lo + size, n)) for lo in range(0, n, size)]


def map_blocks(fn: Callable[[range], T], n: int, workers: int | None = None,
               size: int = BLOCK_SIZE) -> list[T]:
    parts = blocks(n, size)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(parts) <= 1:
        return [fn(p) for p in parts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, parts))
