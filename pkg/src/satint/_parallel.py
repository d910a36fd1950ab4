"""Chunked fan-out of batch kernels over a thread pool.

Chunks are contiguous index ranges and results are concatenated in index
order, so the output never depends on the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_max_threads = os.cpu_count() or 1


def set_max_threads(n: int | None) -> None:
    global _max_threads
    _max_threads = max(1, int(n)) if n else (os.cpu_count() or 1)


def max_threads() -> int:
    return _max_threads


def chunk_bounds(total: int, min_chunk: int = 64) -> list[tuple[int, int]]:
    workers = max(1, min(_max_threads, total // max(min_chunk, 1)))
    edges = [total * i // workers for i in range(workers + 1)]
    return [(edges[i], edges[i + 1]) for i in range(workers) if edges[i + 1] > edges[i]]


def run_chunked(fn, total: int, min_chunk: int = 64):
    """Call ``fn(lo, hi)`` per chunk; returns the list of results in order."""
    bounds = chunk_bounds(total, min_chunk)
    if len(bounds) <= 1:
        return [fn(0, total)] if total else []
    with ThreadPoolExecutor(max_workers=len(bounds)) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
