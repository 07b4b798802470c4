"""Ordered worker pool for study runners."""

import logging
import multiprocessing
import signal
import threading
from concurrent.futures import FIRST_COMPLETED, CancelledError, ProcessPoolExecutor, wait
from dataclasses import dataclass
from typing import Any, Callable, Sequence

from ltnet import config

logger = logging.getLogger(__name__)

# How often a waiting pool looks at the stop flag.
POLL_SECONDS = 0.5


@dataclass(frozen=True)
class TaskFailure:
    index: int
    message: str


def _init_worker(settings: dict) -> None:
    # Ctrl-C is handled by the parent, which cancels what has not started.
    signal.signal(signal.SIGINT, signal.SIG_IGN)
    config.apply_worker_settings(settings)


class StudyPool:
    """Runs one function over many tasks and returns results in task order.

    A failing task yields a TaskFailure in its slot; the rest keep running.
    workers == 1 runs everything inline in the calling process. Worker
    processes start with the parent's current tolerances and caps
    (config.worker_settings), so runtime overrides such as --tol reach them.
    """

    def __init__(self, workers: int | None = None, label: str = "study", start_method: str | None = None):
        self.workers = max(1, workers or config.WORKERS)
        self.label = label
        self.start_method = start_method
        self._stopped = threading.Event()

    @property
    def stopped(self) -> bool:
        return self._stopped.is_set()

    def _progress(self, done: int, total: int, last_logged: int) -> int:
        step = max(1, int(total * config.PROGRESS_EVERY))
        if done == total or done - last_logged >= step:
            logger.info("%s: %d/%d tasks done (%.0f%%)", self.label, done, total, 100.0 * done / total)
            return done
        return last_logged

    def _failure(self, i: int, e: Exception) -> TaskFailure:
        logger.error("%s task %d failed: %s", self.label, i, e)
        return TaskFailure(i, f"{type(e).__name__}: {e}")

    def map_ordered(self, fn: Callable[[Any], Any], tasks: Sequence[Any]) -> list[Any]:
        total = len(tasks)
        results: list[Any] = [None] * total
        if total == 0:
            return results
        last_logged = 0

        if self.workers == 1:
            for i, task in enumerate(tasks):
                if self.stopped:
                    results[i] = TaskFailure(i, "cancelled")
                    continue
                try:
                    results[i] = fn(task)
                except Exception as e:
                    results[i] = self._failure(i, e)
                last_logged = self._progress(i + 1, total, last_logged)
            return results

        logger.info("%s: dispatching %d tasks to %d workers", self.label, total, self.workers)
        context = multiprocessing.get_context(self.start_method) if self.start_method else None
        with ProcessPoolExecutor(
            max_workers=self.workers,
            mp_context=context,
            initializer=_init_worker,
            initargs=(config.worker_settings(),),
        ) as executor:
            index_of = {}
            for i, task in enumerate(tasks):
                if self.stopped:
                    break
                index_of[executor.submit(fn, task)] = i
            for i in range(len(index_of), total):
                results[i] = TaskFailure(i, "cancelled")

            pending = set(index_of)
            done = len(tasks) - len(index_of)
            cancelled = False
            while pending:
                finished, pending = wait(pending, timeout=POLL_SECONDS, return_when=FIRST_COMPLETED)
                if self.stopped and not cancelled:
                    dropped = {f for f in pending if f.cancel()}
                    pending -= dropped
                    finished |= dropped
                    cancelled = True
                    logger.info("%s: cancelled %d pending tasks", self.label, len(dropped) + total - len(index_of))
                for future in finished:
                    i = index_of[future]
                    try:
                        results[i] = future.result()
                    except CancelledError:
                        results[i] = TaskFailure(i, "cancelled")
                    except Exception as e:
                        results[i] = self._failure(i, e)
                    done += 1
                    last_logged = self._progress(done, total, last_logged)
        return results

    def shutdown(self):
        """Ask the pool to stop: pending tasks are cancelled, running ones finish and are kept.

        Only sets a flag, so it is safe to call from a signal handler.
        """
        self._stopped.set()
