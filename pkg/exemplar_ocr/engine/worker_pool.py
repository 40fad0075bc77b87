"""Thread pool over a bounded job queue that returns results in input order."""

from __future__ import annotations

import threading
from queue import Queue
from typing import Callable, Generic, List, Optional, Sequence, TypeVar

from exemplar_ocr.utils.logger import logger
from exemplar_ocr.utils.validators import validate_positive_int

T = TypeVar("T")
R = TypeVar("R")

_STOP = object()


class WorkerPool(Generic[T, R]):
    """Run `fn` over items with `workers` threads; at most queue_capacity + workers items in flight."""

    def __init__(self, workers: int = 1, queue_capacity: int = 8, name: str = "ocr-worker"):
        self.workers = validate_positive_int(workers, "workers")
        self.queue_capacity = validate_positive_int(queue_capacity, "queue_capacity")
        self.name = name
        self.peak_in_flight = 0
        self._in_flight = 0
        self._lock = threading.Lock()

    def _entered(self) -> None:
        with self._lock:
            self._in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)

    def _left(self) -> None:
        with self._lock:
            self._in_flight -= 1

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        if not items:
            return []
        jobs: Queue = Queue(maxsize=self.queue_capacity)
        results: List[Optional[R]] = [None] * len(items)
        failures: List[BaseException] = []
        slots = threading.BoundedSemaphore(self.queue_capacity + self.workers)

        def work() -> None:
            while True:
                job = jobs.get()
                try:
                    if job is _STOP:
                        return
                    position, item = job
                    try:
                        results[position] = fn(item)
                    except BaseException as exc:
                        with self._lock:
                            failures.append(exc)
                    finally:
                        self._left()
                        slots.release()
                finally:
                    jobs.task_done()

        threads = [
            threading.Thread(target=work, name=f"{self.name}-{i}", daemon=True) for i in range(self.workers)
        ]
        for thread in threads:
            thread.start()

        for position, item in enumerate(items):
            slots.acquire()
            # Counted before put: a worker may finish the item before put returns.
            self._entered()
            jobs.put((position, item))
        for _ in threads:
            jobs.put(_STOP)
        for thread in threads:
            thread.join()

        logger("worker_pool").debug(
            "processed %d items with %d workers, peak in flight %d",
            len(items),
            self.workers,
            self.peak_in_flight,
        )
        if failures:
            raise failures[0]
        return results  # type: ignore[return-value]
