import csv
import json
import sqlite3

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from ltnet import config, criteria, experiments, schemas
from ltnet.errors import InputError
from ltnet.experiments import (
    EtaStudyConfig,
    GlobalStudyConfig,
    NetworkRecord,
    chi_drop,
    derive_seed,
    lose_switch,
    normalized_coupling,
    resolve_seed,
    run_eta_study,
    run_global_study,
    run_local_sweep,
    run_sweep_study,
    sample_ei_pair,
    sample_ei_pair_network,
    sample_random_network,
    select_sweep_pairs,
)
from ltnet.metrics import ThresholdFit
from ltnet.model import validate_network

SHORT = {"t_end": 5.0, "dt": 0.05, "window": 0.5}


# === Seeding ===


def test_derived_seeds_are_stable_and_distinct():
    assert derive_seed(42, 0) == derive_seed(42, 0)
    seeds = {derive_seed(42, i) for i in range(100)}
    assert len(seeds) == 100
    assert derive_seed(42, 0) != derive_seed(43, 0)
    assert all(0 <= s < 2 ** 63 for s in seeds)


def test_resolve_seed_prefers_explicit_then_environment(monkeypatch):
    monkeypatch.setattr(config, "SEED", 99)
    assert resolve_seed(5) == 5
    assert resolve_seed() == 99
    monkeypatch.setattr(config, "SEED", None)
    assert isinstance(resolve_seed(), int)


# === Samplers ===


def test_random_network_follows_dale():
    net, x0 = sample_random_network(seed=1, NE=3, NI=2, B=10.0)
    assert np.all(net.W[:, :3] >= 0) and np.all(net.W[:, 3:] <= 0)
    assert np.all((net.m >= 1) & (net.m <= 10))
    assert np.all((x0 >= 0) & (x0 <= net.m))
    assert validate_network(net, require_dale=True).valid
    again, _ = sample_random_network(seed=1, NE=3, NI=2, B=10.0)
    assert_array_equal(net.W, again.W)


def test_random_network_rejects_empty():
    with pytest.raises(InputError):
        sample_random_network(seed=1, NE=0, NI=0, B=10.0)


def test_sampled_pairs_oscillate(rng):
    cfg = EtaStudyConfig()
    for _ in range(100):
        verdict = criteria.ei_pair_limit_cycle(sample_ei_pair(rng, cfg))
        assert verdict.satisfied and not verdict.is_marginal


def test_normalized_coupling_fills_headroom(rng):
    cfg = EtaStudyConfig(n=4)
    pairs = [sample_ei_pair(rng, cfg) for _ in range(4)]
    G = rng.uniform(0, 1, (4, 4))
    np.fill_diagonal(G, 0.0)
    A_bar = normalized_coupling(pairs, G)
    headroom = [criteria.oscillation_threshold(p) - p.u1 for p in pairs]
    assert_allclose(A_bar @ [p.m1 for p in pairs], headroom)
    assert np.all(A_bar.diagonal() == 0)


def test_zero_row_stays_zero(rng):
    cfg = EtaStudyConfig(n=2)
    pairs = [sample_ei_pair(rng, cfg) for _ in range(2)]
    A_bar = normalized_coupling(pairs, [[0.0, 0.0], [1.0, 0.0]])
    assert_array_equal(A_bar[0], [0.0, 0.0])


def test_pair_network_shares_pairs_across_eta():
    cfg = EtaStudyConfig(n=3)
    low = sample_ei_pair_network(cfg, 0.5, seed=8)
    high = sample_ei_pair_network(cfg, 1.5, seed=8)
    assert low.pairs == high.pairs
    assert_allclose(3 * low.Ae, high.Ae)
    assert_array_equal(low.Ai, np.zeros((3, 3)))


@pytest.mark.parametrize("eta, expected", [(0.0, True), (0.9, True), (1.1, False)])
def test_eta_scales_across_the_oscillation_edge(eta, expected):
    pn = sample_ei_pair_network(EtaStudyConfig(n=5), eta, seed=21)
    assert criteria.e2e_coupled_lose(pn).satisfied is expected


def test_eta_config_checks_parameter_ranges():
    assert EtaStudyConfig().m2_min == pytest.approx(8 / (np.sqrt(8) + 0.5) + 0.5)
    with pytest.raises(ValidationError, match="a_min"):
        EtaStudyConfig(a_min=2.5)
    with pytest.raises(ValidationError):
        EtaStudyConfig(eta_list=[-1.0])
    with pytest.raises(ValidationError):
        GlobalStudyConfig(t_end=1.0, dt=2.0)
    with pytest.raises(ValidationError):
        GlobalStudyConfig(unknown_field=1)


# === Global study ===


def _small_global(**overrides) -> GlobalStudyConfig:
    return GlobalStudyConfig(n_networks=4, NE=1, NI=1, B=3.0, n_init_with_stable=2, master_seed=7,
                             **{**SHORT, **overrides})


def test_global_study_records_every_network():
    result = run_global_study(_small_global(), workers=1)
    assert [r.index for r in result.records] == [0, 1, 2, 3]
    assert all(r.ok and r.lose is not None and r.log_chi_osc is not None for r in result.records)
    assert [r.seed for r in result.records] == [derive_seed(7, i) for i in range(4)]
    # too few samples for a mixture fit
    assert result.fit is None and "at least" in result.fit_error
    summary = result.summary()
    assert summary["n_networks"] == 4
    assert summary["n_lose"] + summary["n_stable"] == 4
    assert summary["theta"] is None


def test_global_study_is_deterministic():
    a = run_global_study(_small_global(), workers=1)
    b = run_global_study(_small_global(), workers=1)
    assert [r.log_chi_osc for r in a.records] == [r.log_chi_osc for r in b.records]
    assert [r.lose for r in a.records] == [r.lose for r in b.records]


def test_global_study_files(tmp_path):
    result = run_global_study(_small_global(), workers=1, out_dir=tmp_path)
    for name in ("networks.jsonl", "results.csv", "timings.csv", "hist_lose.csv", "hist_stable.csv",
                 "summary.json", "config.json"):
        assert (tmp_path / name).exists(), name
    with open(tmp_path / "results.csv") as f:
        rows = list(csv.DictReader(f))
    assert [int(r["index"]) for r in rows] == [0, 1, 2, 3]
    assert {r["lose"] for r in rows} <= {"0", "1"}
    assert json.loads((tmp_path / "config.json").read_text())["master_seed"] == 7
    lines = schemas.load_jsonl(tmp_path / "networks.jsonl", schemas.NetworkLineModel)
    assert_allclose(lines[2].to_network().W, result.records[2].network.W)


def test_failed_networks_become_error_records(monkeypatch):
    original = experiments.sample_random_network

    def flaky(seed, *args, **kwargs):
        if seed == derive_seed(7, 1):
            raise InputError("synthetic failure")
        return original(seed, *args, **kwargs)

    monkeypatch.setattr(experiments, "sample_random_network", flaky)
    result = run_global_study(_small_global(), workers=1)
    assert not result.records[1].ok
    assert "synthetic failure" in result.records[1].error
    assert result.summary()["n_failed"] == 1


# === Local sweep ===


def test_lose_switch_statuses():
    grid = np.linspace(0, 1, 4)
    assert lose_switch(grid, [True, True, False, False]) == (grid[2], "single")
    assert lose_switch(grid, [True, False, True, False]) == (None, "multi")
    assert lose_switch(grid, [False, False, True, True]) == (None, "multi")
    assert lose_switch(grid, [True] * 4) == (None, "none")


def test_chi_drop_uses_running_means():
    grid = np.linspace(0, 1, 12)
    chi = [5.0] * 6 + [0.0] * 6
    assert chi_drop(grid, chi, theta=2.5) == (grid[5], "detected")
    assert chi_drop(grid, [0.0] * 12, theta=2.5) == (None, "undetected")


def test_sweep_from_oscillating_to_quiet_pair(oscillating_pair):
    osc = oscillating_pair.to_network()
    quiet = osc.with_input([-1.0, -1.0])
    sweep = run_local_sweep(osc, quiet, steps=5, theta=-5.0, seed=3, **SHORT)
    assert_array_equal(sweep.lose_curve, [True, True, True, False, False])
    assert sweep.lose_status == "single"
    assert sweep.alpha_lose == 0.75
    assert sweep.chi_curve.shape == (5,)


def test_degenerate_sweep_never_switches(oscillating_pair):
    net = oscillating_pair.to_network()
    sweep = run_local_sweep(net, net, steps=3, theta=100.0, **SHORT)
    assert sweep.lose_curve.all()
    assert sweep.lose_status == "none"
    assert sweep.chi_status == "undetected"
    assert not sweep.retained and sweep.delta is None


def test_sweep_rejects_mismatched_endpoints(oscillating_pair, ring_network):
    with pytest.raises(InputError):
        run_local_sweep(oscillating_pair.to_network(), ring_network, steps=3, theta=0.0)


def test_sweep_study_summary(tmp_path, oscillating_pair):
    osc = oscillating_pair.to_network()
    pairs = [(osc, osc.with_input([-1.0, -1.0])), (osc, osc)]
    result = run_sweep_study(pairs, theta=100.0, steps=5, master_seed=1, workers=1, out_dir=tmp_path, **SHORT)
    summary = result.summary()
    assert summary["n_pairs"] == 2
    assert summary["no_switch"] == 1
    assert summary["undetected"] == 2
    assert summary["retained"] == 0
    assert (tmp_path / "curves.csv").read_text().count("\n") == 1 + 2 * 5


def test_select_sweep_pairs(oscillating_pair, ring_network):
    osc, quiet = oscillating_pair.to_network(), ring_network
    networks = [osc, quiet, None]
    records = [
        NetworkRecord(index=0, seed=0, lose=True, log_chi_osc=2.0),
        NetworkRecord(index=1, seed=1, lose=False, log_chi_osc=-30.0),
        NetworkRecord(index=2, seed=2, lose=True, log_chi_osc=5.0),
    ]
    fit = ThresholdFit(theta=0.0, mixture=[], trough_location=0.0, left_trough=-10.0)
    pairs = select_sweep_pairs(networks, records, fit, n_pairs=3, seed=0)
    assert len(pairs) == 3
    assert all(a is osc and b is quiet for a, b in pairs)
    records[1].log_chi_osc = 1.0
    with pytest.raises(InputError, match="0 quiet"):
        select_sweep_pairs(networks, records, fit, n_pairs=1, seed=0)


# === Eta study ===


def _small_eta() -> EtaStudyConfig:
    return EtaStudyConfig(n=2, eta_list=[0.0, 1.1], n_networks=2, master_seed=3, theta=-100.0, **SHORT)


def test_eta_study_lose_fraction_drops_past_one(tmp_path):
    result = run_eta_study(_small_eta(), workers=1, out_dir=tmp_path)
    assert len(result.records) == 4
    per_eta = result.summary()["per_eta"]
    assert per_eta["0.0"]["lose_fraction"] == 1.0
    assert per_eta["1.1"]["lose_fraction"] == 0.0
    assert per_eta["0.0"]["frac_above_theta"] == 1.0
    assert (tmp_path / "hist_eta_0.csv").exists()
    assert (tmp_path / "hist_eta_1.1.csv").exists()
    assert len((tmp_path / "networks.jsonl").read_text().splitlines()) == 2


def test_eta_study_reuses_seeds_across_eta():
    result = run_eta_study(_small_eta(), workers=1)
    seeds = {(r.eta, r.index): r.seed for r in result.records}
    assert seeds[(0.0, 0)] == seeds[(1.1, 0)] == derive_seed(3, 0)
    assert seeds[(0.0, 1)] == seeds[(1.1, 1)]


def test_study_results_are_recorded(tmp_path, monkeypatch):
    from ltnet import db

    monkeypatch.setattr(db, "_db_path", tmp_path / "results.db")
    run_eta_study(_small_eta(), workers=1, record_db=True)
    studies = db.list_studies(kind="eta")
    assert len(studies) == 1
    assert db.count_records(studies[0]["id"]) == 4
    assert db.get_study(studies[0]["id"])["status"] == "finished"


def test_store_failures_do_not_abort_the_study(tmp_path, monkeypatch):
    from ltnet import db

    def locked(*args, **kwargs):
        raise sqlite3.OperationalError("database is locked")

    monkeypatch.setattr(db, "_db_path", tmp_path / "results.db")
    monkeypatch.setattr(db, "create_study", locked)
    assert experiments._record_to_db("eta", 3, _small_eta(), [], {}) is None


def test_store_programming_errors_propagate(tmp_path, monkeypatch):
    from ltnet import db

    def broken(*args, **kwargs):
        raise TypeError("bad row")

    monkeypatch.setattr(db, "_db_path", tmp_path / "results.db")
    monkeypatch.setattr(db, "insert_records", broken)
    with pytest.raises(TypeError):
        experiments._record_to_db("eta", 3, _small_eta(), [{"index": 0}], {})
