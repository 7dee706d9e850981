"""HTTP service: endpoint contracts mirror the CLI's behavior."""

import pytest
from fastapi.testclient import TestClient

from mcusim.scenario import read_scenario_document
from mcusim.service.app import app

from test_scenario import minimal_document


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


class TestHealthAndCatalog:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"

    def test_scenario_catalog(self, client):
        body = client.get("/scenarios").json()
        assert "plc" in body["scenarios"]

    def test_scenario_document_fetch(self, client):
        body = client.get("/scenarios/plc").json()
        assert body["name"] == "plc"

    def test_unknown_scenario_404(self, client):
        assert client.get("/scenarios/nope").status_code == 404


class TestRunEndpoint:
    def test_clean_run(self, client):
        resp = client.post("/run", json={"scenario": minimal_document()})
        assert resp.status_code == 200
        body = resp.json()
        assert body["exit_code"] == 0
        assert body["termination"] == "completed"
        assert body["report"]["scenario"] == "mini"

    def test_attack_toggle_produces_violation_exit(self, client):
        doc = read_scenario_document("plc")
        resp = client.post("/run", json={"scenario": doc, "toggles": {"modbus_attack": True}})
        body = resp.json()
        assert body["exit_code"] == 3
        assert body["mpu_violations"] == 1

    def test_mode_and_ticks_overrides(self, client):
        resp = client.post(
            "/run",
            json={"scenario": minimal_document(), "mode": "fmpu_compat", "ticks": 0},
        )
        body = resp.json()
        assert body["report"]["mode"] == "fmpu_compat"
        assert body["termination"] == "tick_limit"

    def test_trace_opt_in(self, client):
        resp = client.post("/run", json={"scenario": minimal_document(), "trace": True})
        assert resp.json()["report"]["trace"]

    def test_schema_error_is_400(self, client):
        resp = client.post("/run", json={"scenario": {"mcu": "default"}})
        assert resp.status_code == 400
        assert "kernel" in resp.json()["detail"]

    def test_malformed_body_is_422(self, client):
        resp = client.post("/run", json={"ticks": 3})
        assert resp.status_code == 422


class TestCheckEndpoint:
    def test_clean(self, client):
        resp = client.post("/check", json={"scenario": minimal_document()})
        assert resp.json()["exit_code"] == 0

    def test_voided_layout(self, client):
        doc = minimal_document()
        doc["tasks"][0]["user_regions"] = [
            {"base": "0x40001000", "size": 1024, "access": "rw"}
        ]
        resp = client.post("/check", json={"scenario": doc})
        body = resp.json()
        assert body["exit_code"] == 2
        assert body["voided"] == 1


class TestMetricsEndpoint:
    def test_exposure_document(self, client):
        resp = client.post("/metrics", json={"scenario": minimal_document()})
        assert resp.status_code == 200
        rows = resp.json()["report"]["exposure"]
        assert {row["variant"] for row in rows} == {"standard", "worst_case"}

    def test_parity_with_direct_call(self, client):
        from mcusim.scenario import load_scenario
        from mcusim.simulator import metrics_scenario

        direct = metrics_scenario(load_scenario(minimal_document()))
        via_http = client.post("/metrics", json={"scenario": minimal_document()}).json()
        assert via_http["report"] == direct
