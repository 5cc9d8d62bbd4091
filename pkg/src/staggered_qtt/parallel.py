"""Order-preserving thread map shared by the bootstrap and Monte Carlo loops."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads):
    """``None`` or ``0`` means one worker per CPU."""
    if not threads:
        return os.cpu_count() or 1
    if threads < 0:
        raise ValueError("threads must be nonnegative")
    return int(threads)


def parallel_map(fn, items, threads=1):
    """``[fn(x) for x in items]``, evaluated by up to ``threads`` workers.

    Results come back in input order, so any reduction done afterwards
    does not depend on scheduling.
    """
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
