"""Deterministic fan-out helpers.

Work is always partitioned the same way regardless of the worker count;
only the scheduling changes, so reductions stay bit-stable.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "EXCHBOUNDS_THREADS"


def resolve_workers(workers=None) -> int:
    """0 or None means "auto": the environment default, else the CPU count."""
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV, "0") or 0)
    if workers < 0:
        raise ValueError(f"worker count must be >= 0, got {workers}")
    if workers == 0:
        workers = os.cpu_count() or 1
    return workers


def ordered_map(func, items, workers=1):
    """``[func(item) for item in items]``, optionally on a thread pool."""
    items = list(items)
    workers = resolve_workers(workers)
    if workers == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))


def tree_sum(parts):
    """Pairwise reduction in a fixed shape determined only by ``len(parts)``."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to reduce")
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]
