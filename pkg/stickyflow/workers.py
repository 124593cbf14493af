import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

THREADS_ENV = "STICKYFLOW_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def max_workers(environ: Optional[dict] = None) -> int:
    environ = os.environ if environ is None else environ
    raw = environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        logging.warning("Ignoring %s=%r, running single-threaded", THREADS_ENV, raw, extra={"channel": THREADS_ENV})
        return 1
    return value


def map_ordered(func: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Apply func to every item, keeping the input order whatever the worker count."""
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
