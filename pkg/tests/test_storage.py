import os
import time

import pytest

from utils.storage import RunStore


@pytest.fixture
def store(tmp_path):
    return RunStore(str(tmp_path / "runs"))


def test_create_and_read_meta(store):
    run_id = store.create_run({"controller": "OC"})
    assert store.exists(run_id)
    assert store.read_meta(run_id) == {"request": {"controller": "OC"}, "status": "pending"}
    meta = store.update_meta(run_id, status="finished", summary={"seed": 1})
    assert meta["status"] == "finished"
    assert store.read_meta(run_id)["summary"] == {"seed": 1}


def test_invalid_ids_never_leave_base_dir(store):
    with pytest.raises(KeyError):
        store.get_run_dir("../../etc")
    assert not store.exists("../../etc")
    assert not store.cleanup_run("../../etc")


def test_missing_meta(store):
    with pytest.raises(KeyError):
        store.read_meta("00000000-0000-4000-8000-000000000000")


def test_events(store):
    run_id = store.create_run({})
    assert store.read_events(run_id) is None
    (store.get_run_dir(run_id) / "events.log").write_text("0.0\tenter\t1\t0.000\n")
    assert store.read_events(run_id) == ["0.0\tenter\t1\t0.000"]


def test_cleanup_old_runs(store):
    old = store.create_run({})
    fresh = store.create_run({})
    stale = time.time() - 48 * 3600
    os.utime(store.get_run_dir(old), (stale, stale))
    assert store.cleanup_old_runs(max_age_hours=24) == 1
    assert not store.exists(old)
    assert store.exists(fresh)
