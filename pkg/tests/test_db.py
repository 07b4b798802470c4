import sqlite3

import pytest

from ltnet import db


@pytest.fixture
def store(tmp_path, monkeypatch):
    monkeypatch.setattr(db, "_db_path", None)
    db.init_db(tmp_path / "store.db")
    return tmp_path / "store.db"


def test_study_lifecycle(store):
    study_id = db.create_study("eta", 3, '{"n": 2}')
    assert db.get_study(study_id)["status"] == "running"
    db.finish_study(study_id, {"per_eta": {}})
    study = db.get_study(study_id)
    assert study["status"] == "finished"
    assert study["config"] == {"n": 2}
    assert study["summary"] == {"per_eta": {}}
    assert study["finished_at"] is not None
    assert study["finished_at"].endswith("+00:00")


def test_failed_study_keeps_message(store):
    study_id = db.create_study("global", 1, "{}")
    db.fail_study(study_id, "interrupted")
    study = db.get_study(study_id)
    assert study["status"] == "failed"
    assert study["error_message"] == "interrupted"


def test_list_filters_by_kind(store):
    a = db.create_study("global", 1, "{}")
    db.create_study("eta", 2, "{}")
    assert [s["id"] for s in db.list_studies(kind="global")] == [a]
    assert len(db.list_studies()) == 2
    assert db.get_study("missing") is None


def test_records_keyed_by_eta_and_index(store):
    study_id = db.create_study("eta", 3, "{}")
    db.insert_records(study_id, [
        {"index": 0, "seed": 10, "eta": 0.0, "lose": True, "log_chi_osc": 1.0},
        {"index": 0, "seed": 10, "eta": 1.1, "lose": False, "log_chi_osc": -3.0},
        {"index": 1, "seed": 11, "eta": 0.0, "lose": None, "error": "SimulationError: boom"},
    ])
    assert db.count_records(study_id) == 3
    rows = db.get_records(study_id)
    assert [(r["eta"], r["idx"]) for r in rows] == [(0.0, 0), (0.0, 1), (1.1, 0)]
    assert rows[1]["lose"] is None and rows[1]["error"].startswith("SimulationError")
    assert db.get_records(study_id, limit=1, offset=2)[0]["lose"] == 0


def test_runtime_column_added_to_old_stores(tmp_path, monkeypatch):
    path = tmp_path / "old.db"
    conn = sqlite3.connect(path)
    conn.executescript(db.SCHEMA)
    conn.close()
    monkeypatch.setattr(db, "_db_path", None)
    db.init_db(path)
    study_id = db.create_study("global", 1, "{}")
    db.insert_records(study_id, [{"index": 0, "seed": 1, "runtime_ms": 12.5}])
    assert db.get_records(study_id)[0]["runtime_ms"] == 12.5
