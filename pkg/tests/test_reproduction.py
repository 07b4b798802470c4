"""Reduced-scale runs of the three population studies. Hours of CPU; enable with --runslow."""

import numpy as np
import pytest

from ltnet import config
from ltnet.experiments import (
    EtaStudyConfig,
    GlobalStudyConfig,
    run_eta_study,
    run_global_study,
    run_sweep_study,
    select_sweep_pairs,
)

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def global_run():
    cfg = GlobalStudyConfig(n_networks=2000, NE=5, NI=5, B=10.0, t_end=2000.0, dt=0.01, master_seed=11)
    return run_global_study(cfg, workers=config.WORKERS)


def test_global_study_separates_lose_from_stable(global_run):
    summary = global_run.summary()
    assert global_run.fit is not None, global_run.fit_error
    assert summary["lose_prevalence"] < 0.5
    assert abs(summary["frac_lose_below_theta"] - 0.08) <= 0.05
    assert abs(summary["frac_stable_above_theta"] - 0.05) <= 0.04


def test_sweeps_track_the_lose_switch(global_run):
    networks = [r.network for r in global_run.records]
    pairs = select_sweep_pairs(networks, global_run.records, global_run.fit, n_pairs=80, seed=5)
    result = run_sweep_study(pairs, theta=global_run.fit.theta, steps=101, master_seed=5, workers=config.WORKERS)
    deltas = np.array([s.delta for s in result.sweeps if s is not None and s.retained])
    assert deltas.size >= 50
    assert np.median(np.abs(deltas)) <= 0.1
    off = deltas[np.abs(deltas) > 0.05]
    assert np.count_nonzero(off > 0) > off.size / 2


def test_coupling_strength_suppresses_oscillations(global_run):
    theta = global_run.fit.theta
    cfg = EtaStudyConfig(n=10, eta_list=[0.0, 0.99, 1.01], n_networks=200, master_seed=13, theta=theta)
    result = run_eta_study(cfg, workers=config.WORKERS)
    medians = {eta: float(np.median(result.samples(eta))) for eta in cfg.eta_list}
    assert medians[0.99] > theta
    assert medians[1.01] < theta
    assert medians[0.0] > medians[0.99]
