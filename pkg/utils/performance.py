"""
Performance utilities: concurrent execution of independent runs, timing, and a run monitor.
"""
import asyncio
import logging
import threading
import time
from functools import wraps
from typing import Callable, Dict, List, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")


class RunMonitor:
    """Counts filter runs, collapses and elapsed time for the run manifest; safe to update from worker threads."""

    def __init__(self):
        self._lock = threading.Lock()
        self.metrics = {
            "filter_runs": 0,
            "filter_collapses": 0,
            "total_time": 0.0,
            "phases": {},
        }

    def log_run(self, collapsed: bool = False):
        """Record one filter run."""
        with self._lock:
            self.metrics["filter_runs"] += 1
            if collapsed:
                self.metrics["filter_collapses"] += 1

    def log_phase(self, name: str, duration: float):
        """Record the wall-clock of a named phase."""
        with self._lock:
            self.metrics["phases"][name] = self.metrics["phases"].get(name, 0.0) + duration
            self.metrics["total_time"] += duration

    def get_stats(self) -> Dict:
        with self._lock:
            runs = self.metrics["filter_runs"]
            return {
                **self.metrics,
                "phases": dict(self.metrics["phases"]),
                "collapse_rate": round(self.metrics["filter_collapses"] / max(1, runs), 4),
            }

    def reset(self):
        with self._lock:
            for key in self.metrics:
                if isinstance(self.metrics[key], dict):
                    self.metrics[key].clear()
                else:
                    self.metrics[key] = 0


monitor = RunMonitor()


def timed(name: Optional[str] = None) -> Callable:
    """Decorator logging a function's wall-clock and recording it on the monitor."""
    def decorator(func: Callable) -> Callable:
        label = name or func.__name__

        @wraps(func)
        def wrapper(*args, **kwargs):
            start_time = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                duration = time.perf_counter() - start_time
                monitor.log_phase(label, duration)
                logger.info(f"{label} took {duration:.2f} seconds")
        return wrapper
    return decorator


async def _gather(jobs: List[Callable[[], T]], max_workers: int) -> List[T]:
    semaphore = asyncio.Semaphore(max_workers)

    async def run(job):
        async with semaphore:
            return await asyncio.to_thread(job)

    return await asyncio.gather(*(run(job) for job in jobs))


def run_concurrently(jobs: List[Callable[[], T]], max_workers: Optional[int] = None) -> List[T]:
    """
    Run independent zero-argument jobs in worker threads and return their results in order.

    Args:
        jobs: Callables with no arguments
        max_workers: Concurrency cap; 1 runs the jobs sequentially in the caller

    Returns:
        List of job results, in the order of ``jobs``
    """
    if not jobs:
        return []
    workers = len(jobs) if max_workers is None else max(1, int(max_workers))
    if workers == 1 or len(jobs) == 1:
        return [job() for job in jobs]
    return asyncio.run(_gather(jobs, workers))
