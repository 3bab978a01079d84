"""
Ordered fan-out of per-clip work.

Worker count comes from VIDAUG_THREADS (default 1, run inline). Results are
returned in input order regardless of completion order, and every task gets
its own random source, so outputs never depend on the worker count.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

from .errors import ConfigurationError

THREADS_ENV: str = "VIDAUG_THREADS"
DEFAULT_THREADS: int = 1

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """Worker cap from the environment."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return DEFAULT_THREADS
    try:
        count = int(raw)
    except ValueError as e:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from e
    if count < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be at least 1, got {count}")
    return count


def ordered_map(func: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Apply `func` to each item, possibly in parallel, keeping input order."""
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
