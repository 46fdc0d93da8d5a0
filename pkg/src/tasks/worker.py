"""
Worker pool for per-segment featurisation and per-night reporting
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from ..config.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], n_workers: Optional[int] = None) -> List[R]:
    """
    Apply fn to every item, results in input order

    Args:
        fn: Pure function of one item
        items: Work items
        n_workers: Thread count (settings.N_WORKERS when None; 1 runs inline)

    Returns:
        [fn(item) for item in items]
    """
    items = list(items)
    n_workers = n_workers or settings.N_WORKERS
    if n_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    logger.debug(f"Running {len(items)} items on {n_workers} workers")
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))
