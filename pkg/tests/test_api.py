import pytest
from fastapi.testclient import TestClient

import scripts.api as api
from core.world import SimulationIntegrityError
from utils.storage import RunStore

EVENTS = "0.0\tenter\t1\t0.000\tsubject\n0.4\tplan\t1\t5.600\tfeasible=1 fallback=0\n"
TINY = {
    "controller": "CF",
    "overrides": {"warmup_time": 8, "approach_length": 300, "insertion_wait": 4},
    "network": ["300 onramp", "300", "300 offramp"],
}


class StubResult:
    def to_row(self):
        return {"controller": "OC_LM0", "subject_per_10km": 0.25}


@pytest.fixture
def store(tmp_path, monkeypatch):
    run_store = RunStore(str(tmp_path / "api_runs"))
    monkeypatch.setattr(api, "run_store", run_store)
    return run_store


@pytest.fixture
def client(store):
    return TestClient(api.app)


@pytest.fixture
def stub_runs(monkeypatch):
    calls = []

    def fake_run(spec, params=None, network=None, out_dir=None, budget_multiple=None):
        calls.append((spec, params, network))
        (out_dir / "events.log").write_text(EVENTS)
        return StubResult()

    monkeypatch.setattr(api, "run_scenario", fake_run)
    return calls


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "healthy"
    assert len(response.json()["controllers"]) == 7


def test_submit_and_poll(client, stub_runs):
    response = client.post("/runs", json={"state": "onset", "vot": 20, "overrides": {"horizon": 8}})
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "pending"
    meta = client.get(f"/runs/{body['run_id']}").json()
    assert meta["status"] == "finished"
    assert meta["summary"]["subject_per_10km"] == 0.25
    assert meta["request"]["state"] == "onset"
    spec, params, network = stub_runs[0]
    assert spec.vot == 20.0
    assert params.horizon == 8.0
    assert network is None


def test_event_filter(client, stub_runs):
    run_id = client.post("/runs", json={}).json()["run_id"]
    assert len(client.get(f"/runs/{run_id}/events").json()["events"]) == 2
    plans = client.get(f"/runs/{run_id}/events", params={"kind": "plan"}).json()["events"]
    assert plans == ["0.4\tplan\t1\t5.600\tfeasible=1 fallback=0"]


def test_failed_run_is_reported(client, monkeypatch):
    def broken(*args, **kwargs):
        raise SimulationIntegrityError("Overlap in right lane")

    monkeypatch.setattr(api, "run_scenario", broken)
    run_id = client.post("/runs", json={}).json()["run_id"]
    meta = client.get(f"/runs/{run_id}").json()
    assert meta["status"] == "failed"
    assert "Overlap" in meta["error"]


@pytest.mark.parametrize("payload, message", [
    ({"controller": "OC_X"}, "Unknown controller"),
    ({"state": "jammed"}, "Unknown traffic state"),
    ({"overrides": {"p_on": 2.0}}, "Invalid value for p_on"),
    ({"overrides": {"warp": 1.0}}, "Unknown parameter"),
    ({"network": ["300 bridge"]}, "Invalid network"),
])
def test_invalid_requests(client, payload, message):
    response = client.post("/runs", json=payload)
    assert response.status_code == 400
    assert message in response.json()["detail"]


def test_unknown_runs(client):
    assert client.get("/runs/not-a-run").status_code == 404
    assert client.get("/runs/00000000-0000-4000-8000-000000000000/events").status_code == 404
    assert client.delete("/runs/not-a-run").status_code == 404


def test_events_before_finish(client, store):
    run_id = store.create_run({"controller": "CF"})
    assert client.get(f"/runs/{run_id}/events").status_code == 409


def test_delete_run(client, stub_runs, store):
    run_id = client.post("/runs", json={}).json()["run_id"]
    assert client.delete(f"/runs/{run_id}").status_code == 200
    assert not store.exists(run_id)


def test_real_run_on_small_network(client):
    run_id = client.post("/runs", json=TINY).json()["run_id"]
    meta = client.get(f"/runs/{run_id}").json()
    assert meta["status"] == "finished"
    assert meta["summary"]["controller"] == "CF"
    events = client.get(f"/runs/{run_id}/events", params={"kind": "enter"}).json()["events"]
    assert any(line.endswith("subject") for line in events)
