"""
Task manager for benchmark batches
Runs independent samples with a concurrency limit and reports progress
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

from ..errors import InvalidConfig

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

ProgressCallback = Callable[[int, int, float], None]


class BatchTaskManager:
    """Executes one function over many items, results kept in item order"""

    def __init__(self, max_concurrent: int = 1,
                 progress_callback: Optional[ProgressCallback] = None):
        if max_concurrent < 1:
            raise InvalidConfig(f"jobs must be >= 1, got {max_concurrent}")
        self.max_concurrent = max_concurrent
        self.progress_callback = progress_callback

    def _report(self, done: int, total: int, start: float) -> None:
        if self.progress_callback:
            self.progress_callback(done, total, time.monotonic() - start)

    def execute_batch(self, func: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """
        Run func on every item

        Args:
            func: per-item work; expected failures must be returned, not raised
            items: inputs in the order the results should come back

        Returns:
            List of results aligned with items
        """
        total = len(items)
        start = time.monotonic()
        if self.max_concurrent == 1 or total <= 1:
            results = []
            for i, item in enumerate(items):
                results.append(func(item))
                self._report(i + 1, total, start)
            return results

        results: Dict[int, Any] = {}
        with ThreadPoolExecutor(max_workers=self.max_concurrent) as pool:
            futures = {pool.submit(func, item): i for i, item in enumerate(items)}
            for future in as_completed(futures):
                # unexpected exceptions propagate and cancel the batch
                results[futures[future]] = future.result()
                self._report(len(results), total, start)
        return [results[i] for i in range(total)]


class ProgressTracker:
    """Logs batch progress every `every` completed items"""

    def __init__(self, every: int = 5):
        self.every = max(1, every)
        self.last_update = 0

    def __call__(self, done: int, total: int, elapsed: float):
        if done - self.last_update >= self.every or done == total:
            progress_pct = 100.0 * done / total if total else 100.0
            logger.info("Progress: %.1f%% (%d/%d) | Elapsed: %.1fs", progress_pct, done, total, elapsed)
            self.last_update = done
