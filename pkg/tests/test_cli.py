import json

import pytest

from ltnet import config
from ltnet.cli import main

PAIR = {"a": 4, "b": 3, "c": 3, "d": 0, "m1": 1, "m2": 2, "u1": 1.5, "u2": 0}


@pytest.fixture(autouse=True)
def _isolated_config(restore_config):
    yield


def _network_file(tmp_path, u, name="net.json", W=((4, -3), (3, 0)), m=(1, 2)) -> str:
    path = tmp_path / name
    path.write_text(json.dumps({"W": [list(r) for r in W], "u": list(u), "m": list(m)}))
    return str(path)


def _json_file(tmp_path, name, payload) -> str:
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_lose_exit_codes(tmp_path, capsys):
    assert main(["lose", _network_file(tmp_path, [1.5, 0])]) == 0
    assert json.loads(capsys.readouterr().out)["lose"] is True
    assert main(["lose", _network_file(tmp_path, [-1, -1])]) == 1
    assert json.loads(capsys.readouterr().out)["stable_contained"][0]["pattern"] == "00"


def test_marginal_lose_is_indeterminate(tmp_path):
    path = _network_file(tmp_path, [0.5, -0.5], W=((1, -1), (1, 1)), m=(1, 1))
    assert main(["lose", path]) == 2


def test_malformed_input_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{")
    assert main(["lose", str(path)]) == 3
    assert main(["lose", str(tmp_path / "missing.json")]) == 3


def test_usage_error_exit_code():
    assert main(["lose"]) == 3
    assert main(["frobnicate"]) == 3


def test_dale_violation_exit_code(tmp_path):
    path = _network_file(tmp_path, [0, 0], W=((1, 0), (-1, 0)), m=(1, 1))
    assert main(["validate", path]) == 0
    assert main(["validate", "--dale", path]) == 3
    assert main(["lose", "--dale", path]) == 3


def test_version(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.startswith("ltnet ")


def test_equilibria_json_lines(tmp_path, capsys):
    assert main(["equilibria", _network_file(tmp_path, [1.5, 0])]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 9
    assert json.loads(lines[4])["pattern"] == "ll"


def test_equilibria_csv(tmp_path, capsys):
    assert main(["equilibria", "--contained", "--format", "csv", _network_file(tmp_path, [1.5, 0])]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "pattern,index,stability,contained,abscissa,x1,x2"
    assert rows[1].startswith("ll,4,unstable,True,")


def test_check_ei_pair(tmp_path, capsys):
    assert main(["check", "ei-pair", _json_file(tmp_path, "pair.json", PAIR)]) == 0
    assert json.loads(capsys.readouterr().out)["per_condition"]["5e"] is True
    assert main(["check", "ei-pair", _json_file(tmp_path, "quiet.json", {**PAIR, "a": 0})]) == 1


def test_check_single_inhibitory(tmp_path, capsys):
    doc = {"a": [[8.5, 1], [1, 5]], "b": [5, 7], "c": [4, 5], "d": 1, "u_e": [30, 15], "u_inh": -5,
           "m_e": [2, 3], "m_inh": 6}
    assert main(["check", "single-inh", "--u-inh", "-5", _json_file(tmp_path, "si.json", doc)]) == 0
    body = json.loads(capsys.readouterr().out)
    corners = {p["sigma"]: p["corner"] for p in body["cross_section"]}
    assert corners["ss"] == [12.0, 28.0]
    assert main(["check", "single-inh", _json_file(tmp_path, "si2.json", {**doc, "u_e": [40, 40]})]) == 1


def test_check_ei_net(tmp_path, capsys):
    doc = {"pairs": [PAIR, PAIR], "Ae": [[0, 2], [2, 0]]}
    assert main(["check", "ei-net", "--enumerate", _json_file(tmp_path, "pn.json", doc)]) == 1
    body = json.loads(capsys.readouterr().out)
    assert body["test"] == "e2e" and body["exact"] is True
    assert body["enumeration"]["lose"] is False


def test_check_inhibitory_ring(tmp_path, capsys):
    W = ((0, -4, -0.5), (-0.5, 0, -4), (-4, -0.5, 0))
    path = _network_file(tmp_path, [5, 5, 5], W=W, m=(10, 10, 10))
    assert main(["check", "inhibitory", path]) == 0
    assert json.loads(capsys.readouterr().out)["valid_cycle"]["vertices"] == [1, 2, 3]


def test_check_inhibitory_rejects_excitation(tmp_path):
    assert main(["check", "inhibitory", _network_file(tmp_path, [1.5, 0])]) == 4


def test_simulate_then_metrics(tmp_path, capsys):
    traj = tmp_path / "traj.csv"
    net = _network_file(tmp_path, [1.5, 0])
    assert main(["simulate", net, "--x0", "0.1,0.1", "--tend", "50", "--dt", "0.01", "--out", str(traj)]) == 0
    assert traj.read_text().startswith("t,x1,x2\n")
    assert main(["metrics", str(traj), "--m", "1,2", "--window", "0.5"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["chi_pp"] > 0.1
    assert [c["node"] for c in body["per_channel"]] == [1, 2]


def test_simulate_random_start_is_reproducible(tmp_path, capsys):
    net = _network_file(tmp_path, [1.5, 0])
    assert main(["simulate", net, "--x0", "random:4", "--tend", "1"]) == 0
    first = capsys.readouterr().out
    assert main(["--seed", "4", "simulate", net, "--tend", "1"]) == 0
    assert capsys.readouterr().out == first


def test_metrics_rate_length_mismatch(tmp_path):
    traj = tmp_path / "traj.csv"
    assert main(["simulate", _network_file(tmp_path, [1.5, 0]), "--x0", "0,0", "--tend", "1", "--out", str(traj)]) == 0
    assert main(["metrics", str(traj), "--m", "1"]) == 3


def test_tolerance_flag_is_applied(tmp_path):
    assert main(["--tol", "1e-6", "lose", _network_file(tmp_path, [1.5, 0])]) == 0
    assert config.REL_TOL == 1e-6
    assert main(["--tol", "-1", "lose", _network_file(tmp_path, [1.5, 0])]) == 3


def test_study_requires_out_dir():
    assert main(["study", "global"]) == 3


def test_global_study_command(tmp_path, capsys):
    cfg = _json_file(tmp_path, "cfg.json", {"NE": 1, "NI": 1, "B": 3.0, "t_end": 5.0, "dt": 0.05, "window": 0.5})
    out = tmp_path / "run"
    code = main(["--threads", "1", "--seed", "7", "study", "global", "--config", cfg, "--n-networks", "3",
                 "--out", str(out)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["kind"] == "global" and summary["n_networks"] == 3 and summary["master_seed"] == 7
    assert (out / "results.csv").exists()


def test_sweep_study_command(tmp_path, capsys):
    net = {"W": [[4, -3], [3, 0]], "u": [1.5, 0], "m": [1, 2]}
    pairs = _json_file(tmp_path, "pairs.json", {"theta": 100.0, "steps": 3, "pairs": [{"osc": net, "stable": net}]})
    code = main(["--threads", "1", "study", "sweep", "--pairs", pairs, "--t-end", "50", "--dt", "0.05",
                 "--seed", "1", "--out", str(tmp_path / "sweep")])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["no_switch"] == 1


def test_config_command(capsys):
    assert main(["config"]) == 0
    assert "REL_TOL" in capsys.readouterr().out
