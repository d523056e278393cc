import numpy as np
import pytest
from fastapi.testclient import TestClient

from app.backend.model.reference import weekly_markets_model
from app.backend.model.var_model import default_initial_state
from app.backend.strategy.rules import weights_last


@pytest.fixture
def client():
    from app.backend.api.main import app

    return TestClient(app)


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy"}


def test_weights_endpoint(client):
    response = client.post("/allocation/weights", json={"horizon": 1, "alpha": 2.0, "rf": 0.0005})
    assert response.status_code == 200
    body = response.json()
    model = weekly_markets_model(4, 1)
    expected = weights_last(model, default_initial_state(model), 0.0005, 2.0, 1.0)
    np.testing.assert_allclose(body["weights"], expected, rtol=1e-12)
    assert body["labels"] == ["be", "de", "jp", "uk"]


def test_weights_endpoint_with_inline_model(client):
    payload = {
        "model": {"k": 1, "p": 0, "nu_tilde": [0.002], "phi_tilde": [[0.0]], "sigma_tilde": [[4e-4]]},
        "horizon": 2,
        "alpha": 1.0,
        "y": [0.0],
    }
    response = client.post("/allocation/weights", json=payload)
    assert response.status_code == 200
    assert response.json()["dollars"] == pytest.approx([5.0])


def test_weights_endpoint_rejects_zero_wealth(client):
    response = client.post("/allocation/weights", json={"horizon": 2, "alpha": 1.0, "wealth": 0.0})
    assert response.status_code == 500


def test_weights_endpoint_rejects_unknown_variant(client):
    response = client.post("/allocation/weights", json={"horizon": 2, "alpha": 1.0, "variant": "kelly"})
    assert response.status_code == 422


def test_simulate_endpoint(client):
    response = client.post("/allocation/simulate", json={"horizon": 2, "alpha": 2.0, "rf": 0.0005, "repetitions": 2000})
    assert response.status_code == 200
    body = response.json()
    assert body["common_random_numbers"] is True
    assert set(body["strategies"]) == {"general", "iid"}
    summary = body["strategies"]["general"]
    assert set(summary["quantiles"]) == {"0.05", "0.25", "0.5", "0.75", "0.95"}
    assert summary["flagged"] == 0


def test_simulate_endpoint_caps_repetitions(client):
    response = client.post("/allocation/simulate", json={"horizon": 2, "alpha": 2.0, "repetitions": 50_000})
    assert response.status_code == 422


def test_simulate_endpoint_rejects_unknown_strategy(client):
    response = client.post("/allocation/simulate", json={"horizon": 2, "alpha": 2.0, "strategies": ["general", "kelly"]})
    assert response.status_code == 422
