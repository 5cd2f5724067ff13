import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """Class running independent lab tasks (ladder points, grid cells)"""

    def __init__(self, threads: int | None = None):
        """init method, reading the thread count from SCHRODLAB_THREADS"""
        if threads is None:
            threads = int(os.environ.get("SCHRODLAB_THREADS", "1"))
        self.threads = max(1, threads)
        self.completed_tasks = 0

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Ordered map; sequential when a single thread is configured"""
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            results = [fn(item) for item in items]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as executor:
                results = list(executor.map(fn, items))
        self.completed_tasks += len(items)
        return results


default_pool = WorkerPool()
