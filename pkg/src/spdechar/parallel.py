"""Path-chunked thread pool.

Work is always split into chunks of a fixed size that does not depend on the
thread count, and chunk results are reassembled in index order, so outputs
are bitwise identical for any number of threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

CHUNK = 64

_threads: int | None = None


def set_threads(n: int | None) -> None:
    global _threads
    if n is not None and n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = n


def get_threads() -> int:
    return _threads or os.cpu_count() or 1


def chunks(total: int, size: int = CHUNK) -> list[tuple[int, int]]:
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]


def map_chunks(fn: Callable[[int, int], T], total: int, size: int = CHUNK) -> list[T]:
    """Apply ``fn(lo, hi)`` over fixed-size index chunks, results in order."""
    spans = chunks(total, size)
    n = get_threads()
    if n == 1 or len(spans) == 1:
        return [fn(lo, hi) for lo, hi in spans]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda s: fn(*s), spans))
