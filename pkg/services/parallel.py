"""Order-preserving worker pool"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(function: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """Apply function to every item; results come back in input order

    Work must not draw random numbers from shared generators: anything
    stochastic is decided by the caller before the fan-out so results do not
    depend on the worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(function, items))
