"""Replica-block execution with a deterministic merge order."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

THREADS_ENV = "PHI_LDP_THREADS"


def worker_count(requested: int | None = None) -> int:
    """Number of worker threads, capped by ``PHI_LDP_THREADS`` when set."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


def map_blocks(fn: Callable[[int], T], n_blocks: int, threads: int | None = 1) -> list[T]:
    """Evaluate ``fn(0..n_blocks-1)``; results are always ordered by block index."""
    n = worker_count(threads)
    if n == 1 or n_blocks <= 1:
        return [fn(i) for i in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, range(n_blocks)))


def block_sizes(total: int, block: int) -> Sequence[int]:
    if total < 1:
        raise ValueError("need at least one replica")
    full, rest = divmod(total, block)
    return [block] * full + ([rest] if rest else [])
