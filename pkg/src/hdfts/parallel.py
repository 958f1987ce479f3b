"""Thread-pool helper whose results never depend on the worker count."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigError

THREADS_ENV = "HDFTS_THREADS"


def thread_cap(threads: int | None = None) -> int:
    """Worker count: the explicit argument, capped by ``$HDFTS_THREADS`` when set.

    With neither, work runs serially.
    """
    env = os.environ.get(THREADS_ENV, "").strip()
    try:
        cap = int(env) if env else None
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if threads is None:
        threads = cap if cap is not None else 1
    elif cap is not None:
        threads = min(int(threads), cap)
    return max(1, int(threads))


def ordered_map(func, items, threads: int | None = None) -> list:
    """``[func(x) for x in items]``, optionally on a thread pool, in input order."""
    items = list(items)
    n = thread_cap(threads)
    if n == 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(func, items))
