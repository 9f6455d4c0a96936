import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, List, Optional, TypeVar

from tqdm import tqdm

log = logging.getLogger("WORKERS")

T = TypeVar("T")
R = TypeVar("R")


def default_threads() -> int:
    return max(1, int(os.getenv("FILTERXL_THREADS", "1")))


def progress_enabled() -> bool:
    return os.getenv("FILTERXL_PROGRESS", "true").lower() in ("1", "true", "yes", "on")


class WorkerPool:
    """Ordered map over a bounded thread pool, with run statistics."""

    def __init__(self, threads: Optional[int] = None, name: str = "work"):
        self.threads = default_threads() if threads is None else max(1, threads)
        self.name = name
        self._lock = threading.Lock()
        self.stats = {
            'tasks_done': 0,
            'tasks_failed': 0,
            'busy_seconds': 0.0,
            'threads': self.threads
        }

    def _run_one(self, fn: Callable[[T], R], item: T) -> R:
        start = time.time()
        try:
            result = fn(item)
        except Exception:
            with self._lock:
                self.stats['tasks_failed'] += 1
            raise
        with self._lock:
            self.stats['tasks_done'] += 1
            self.stats['busy_seconds'] += time.time() - start
        return result

    def map(self, fn: Callable[[T], R], items: Iterable[T], progress: bool = False,
            total: Optional[int] = None) -> List[R]:
        """Results in input order; the first worker exception propagates."""
        items = list(items)
        log.debug("%s: %d tasks on %d thread(s)", self.name, len(items), self.threads)
        bar = tqdm(total=total or len(items), disable=not progress, desc=f"[{self.name.upper()}]",
                   leave=False)
        try:
            if self.threads == 1:
                out = []
                for item in items:
                    out.append(self._run_one(fn, item))
                    bar.update(1)
                return out
            with ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix=self.name) as pool:
                futures = [pool.submit(self._run_one, fn, item) for item in items]
                out = []
                for f in futures:
                    out.append(f.result())
                    bar.update(1)
                return out
        finally:
            bar.close()

    def get_stats(self) -> Dict:
        with self._lock:
            return self.stats.copy()
