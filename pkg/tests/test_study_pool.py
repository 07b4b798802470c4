import signal
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from ltnet import config, linalg
from ltnet.cli import _interruptible
from ltnet.study_pool import StudyPool, TaskFailure


def _square(x):
    return x * x


def _fragile(x):
    if x == 2:
        raise ValueError("two is not allowed")
    return -x


def test_inline_map_keeps_order():
    assert StudyPool(workers=1).map_ordered(_square, [3, 1, 2]) == [9, 1, 4]


def test_failure_occupies_its_slot():
    results = StudyPool(workers=1).map_ordered(_fragile, [1, 2, 3])
    assert results[0] == -1 and results[2] == -3
    assert results[1] == TaskFailure(1, "ValueError: two is not allowed")


def test_empty_task_list():
    assert StudyPool(workers=1).map_ordered(_square, []) == []


def test_shutdown_cancels_remaining_inline_tasks():
    pool = StudyPool(workers=1)
    seen = []

    def stop_after_first(x):
        seen.append(x)
        pool.shutdown()
        return x

    results = pool.map_ordered(stop_after_first, [1, 2, 3])
    assert seen == [1]
    assert results[0] == 1
    assert results[1:] == [TaskFailure(1, "cancelled"), TaskFailure(2, "cancelled")]


@pytest.mark.slow
def test_process_pool_matches_inline():
    tasks = list(range(20))
    assert StudyPool(workers=2).map_ordered(_fragile, tasks) == StudyPool(workers=1).map_ordered(_fragile, tasks)


def test_ctrl_c_during_dispatch_cancels_the_rest(monkeypatch):
    original_submit = ProcessPoolExecutor.submit
    submitted = []

    def submit_then_interrupt(self, fn, *args, **kwargs):
        future = original_submit(self, fn, *args, **kwargs)
        submitted.append(future)
        if len(submitted) == 2:
            signal.raise_signal(signal.SIGINT)
        return future

    monkeypatch.setattr(ProcessPoolExecutor, "submit", submit_then_interrupt)
    before = signal.getsignal(signal.SIGINT)
    pool = StudyPool(workers=2)
    with _interruptible(pool):
        results = pool.map_ordered(abs, range(-5, 5))

    assert pool.stopped
    assert len(submitted) == 2
    assert results[2:] == [TaskFailure(i, "cancelled") for i in range(2, 10)]
    assert results[0] in (5, TaskFailure(0, "cancelled"))
    assert results[1] in (4, TaskFailure(1, "cancelled"))
    assert signal.getsignal(signal.SIGINT) is before


def test_spawned_workers_see_runtime_tolerance(restore_config):
    config.REL_TOL = 0.5
    pool = StudyPool(workers=2, start_method="spawn")
    assert pool.map_ordered(linalg.tolerance, [np.zeros((1, 1))] * 2) == [0.5, 0.5]


def test_worker_settings_round_trip(restore_config):
    settings = config.worker_settings()
    assert settings["REL_TOL"] == config.REL_TOL
    config.apply_worker_settings({**settings, "REL_TOL": 1e-4})
    assert config.REL_TOL == 1e-4
    with pytest.raises(KeyError):
        config.apply_worker_settings({"API_KEYS": ["x"]})
