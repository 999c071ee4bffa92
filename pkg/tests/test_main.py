import pytest
from fastapi.testclient import TestClient

from app.main import VERSION, app


@pytest.fixture
def client():
    return TestClient(app)


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert body["version"] == VERSION


def test_mean_value(client):
    response = client.get("/mean-value", params={"N": 4, "d": 3, "s": 2})
    assert response.status_code == 200
    assert response.json()["value"] == pytest.approx(2 * 16 - 4, rel=1e-9)


def test_mean_value_rejects_small_d(client):
    response = client.get("/mean-value", params={"N": 4, "d": 2})
    assert response.status_code == 422
    assert "error" in response.json()


def test_debug_tiles(client):
    body = client.get("/debug-tiles", params={"N": 4}).json()
    assert len(body["tiles"]) == 4
    assert body["tiles"][0]["short"] == pytest.approx(4.0**-3)


def test_scan_st_rejects_low_exponent(client):
    response = client.post("/jobs/scan-st", json={"p": 6, "n_values": [1, 2]})
    assert response.status_code == 422
    assert "2d+2" in response.json()["error"]


def test_scan_st_unknown_key(client):
    response = client.post("/jobs/scan-st", json={"colour": "blue"})
    assert response.status_code == 422


def test_scan_st_invalid_json(client):
    response = client.post("/jobs/scan-st", content=b"{not json", headers={"content-type": "application/json"})
    assert response.status_code == 400


def test_scan_st_budget(client):
    response = client.post("/jobs/scan-st", json={"n_values": [1, 16], "memory_budget_mb": 1})
    assert response.status_code == 507
    assert response.json()["largest_feasible"] == 1


def test_scan_dec_small_run(client):
    response = client.post("/jobs/scan-dec", params={"variant": "conjecture2"},
                           json={"n_values": [1], "families": ["single"], "mc_samples": 2048})
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert rows[0]["ratio"] == pytest.approx(1.0, rel=1e-12)
