import numpy as np
import pytest
from fastapi.testclient import TestClient

from memcore.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(), raise_server_exceptions=False)


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_device_sim_full_switch(client):
    r = client.post("/device/sim", json={"voltage": 2.5, "duration_s": 22e-6})
    assert r.status_code == 200
    body = r.json()
    assert body["x_final"] >= 0.99
    assert body["resistance_before_ohm"] == pytest.approx(1e7, rel=1e-9)


def test_device_sim_trace(client):
    r = client.post("/device/sim", json={"voltage": 2.5, "duration_s": 20e-6,
                                         "trace_points": 10})
    body = r.json()
    assert len(body["trace"]) == 11
    xs = [p[1] for p in body["trace"]]
    assert xs == sorted(xs)


def test_xbar_solve_explicit_states(client):
    r = client.post("/xbar/solve", json={
        "rows": 1, "cols": 2, "wire_resistance": 0.0,
        "states": [[1.0, 1.0]], "inputs": [0.2]})
    body = r.json()
    want = 0.002 * 0.05 * 0.2    # linearized conductance at x=1 times 0.2 V
    assert body["column_currents"] == pytest.approx([want, want], rel=1e-12)
    assert body["iterations"] == 0


def test_xbar_solve_dense_matches_jacobi(client):
    base = {"rows": 5, "cols": 4, "wire_resistance": 1.5, "state_seed": 3,
            "inputs": [0.1, -0.2, 0.3, 0.0, 0.25], "tolerance": 1e-12,
            "max_iterations": 400000}
    jr = client.post("/xbar/solve", json=base).json()
    dr = client.post("/xbar/solve", json={**base, "method": "dense"}).json()
    assert jr["column_currents"] == pytest.approx(dr["column_currents"], rel=1e-6)


def test_xbar_solve_node_voltages_flag(client):
    r = client.post("/xbar/solve", json={
        "rows": 2, "cols": 2, "wire_resistance": 0.0, "state_seed": 1,
        "inputs": [0.2, -0.2], "include_node_voltages": True}).json()
    assert np.asarray(r["row_node_voltages"]).shape == (2, 2)
    assert np.all(np.asarray(r["col_node_voltages"]) == 0.0)


def test_xbar_bench(client):
    r = client.post("/xbar/bench", json={"sizes": [[4, 4]], "trials": 2,
                                         "wire_resistances": [0.0, 1.5]})
    body = r.json()
    assert len(body["cases"]) == 2
    assert body["worst_rel_deviation"] < 1e-6


def test_map_endpoint(client):
    r = client.post("/map", json={"topology": [41, 15, 41]})
    assert r.json()["n_cores"] == 1


def test_map_capacity_error_kind(client):
    r = client.post("/map", json={"topology": [60000, 800, 1]})
    assert r.status_code == 400
    assert r.json()["error"]["kind"] == "capacity"


def test_overdrive_error_kind(client):
    r = client.post("/xbar/solve", json={"rows": 2, "cols": 2,
                                         "inputs": [5.0, 0.0]})
    assert r.status_code == 400
    assert r.json()["error"]["kind"] == "config"


def test_validation_error_status(client):
    r = client.post("/xbar/solve", json={"rows": 2})
    assert r.status_code == 422


def test_cost_endpoint_preset(client):
    r = client.post("/cost", json={"phase": "recognition", "preset": "kdd_anomaly"})
    body = r.json()
    assert body["compute_energy_j"] == pytest.approx(2.48e-10, rel=1e-9)
    assert body["time_per_input_s"] == pytest.approx(0.77e-6, rel=1e-9)


def test_cost_endpoint_explicit_counts(client):
    r = client.post("/cost", json={"phase": "training", "n_cores": 57, "n_layers": 4})
    assert r.json()["compute_energy_j"] == pytest.approx(4.18e-7, rel=0.01)


def test_report_endpoint(client):
    r = client.post("/report", json={"phase": "training"})
    body = r.json()
    assert body["header"].startswith("application,phase")
    assert len(body["rows"]) == 4
    assert "kdd_anomaly" in body["reports"]


def test_run_endpoint_smoke(client, tmp_path):
    r = client.post("/run", json={"preset": "kdd_anomaly", "seed": 1,
                                  "out_dir": str(tmp_path / "svc"),
                                  "epochs": 2, "n_train": 80})
    assert r.status_code == 200
    body = r.json()
    assert body["metrics"]["preset"] == "kdd_anomaly"
    assert "detection_rate" in body["metrics"]


def test_pretrain_endpoint_skips_fine_tune(client, tmp_path):
    r = client.post("/pretrain", json={"preset": "mnist_desk_deep", "seed": 1,
                                       "out_dir": str(tmp_path / "pre"),
                                       "pretrain_epochs": 1, "n_train": 60})
    assert r.status_code == 200
    assert "accuracy" not in r.json()["metrics"]
