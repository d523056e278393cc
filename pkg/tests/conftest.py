import logging

import numpy as np
import pytest

from app.backend.model.reference import weekly_markets_model
from app.backend.model.var_model import VarModel


@pytest.fixture(autouse=True)
def quiet_environment(monkeypatch):
    monkeypatch.setenv("ALLOC_LOG_DIR", "")
    monkeypatch.delenv("ALLOC_CLOUDWATCH_LOG_GROUP", raising=False)
    monkeypatch.delenv("ALLOC_THREADS", raising=False)
    app_logger = logging.getLogger("app")
    monkeypatch.setattr(app_logger, "handlers", [])
    monkeypatch.setattr(app_logger, "propagate", True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def weekly_model():
    return weekly_markets_model(4, 1)


@pytest.fixture(scope="session")
def weekly_model_no_predictor():
    return weekly_markets_model(5, 0)


@pytest.fixture
def two_asset_model():
    nu = np.array([0.003, 0.001])
    phi = np.array([[0.2, -0.1], [0.05, 0.3]])
    sigma = np.array([[4e-4, 1e-4], [1e-4, 2.5e-4]])
    return VarModel(nu, phi, sigma, k=2, p=0)


@pytest.fixture
def asset_predictor_model():
    nu = np.array([0.002, 0.001])
    phi = np.array([[0.1, 0.4], [0.0, 0.6]])
    sigma = np.array([[4e-4, -1.5e-4], [-1.5e-4, 3e-4]])
    return VarModel(nu, phi, sigma, k=1, p=1)
