from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field
from typing import Dict, List, Optional
import logging

import numpy as np

from app.backend.model.reference import weekly_markets_model
from app.backend.model.var_model import VarModel, default_initial_state
from app.backend.sim.wealth import SimulationConfig, simulate_wealth
from app.backend.strategy.risk_free import RiskFreeCurve
from app.backend.strategy.rules import build_rule, evaluate_rule
from app.backend.utils.errors import AllocationError, NumericalError

logger = logging.getLogger(__name__)

MAX_API_REPETITIONS = 20_000


class ModelPayload(BaseModel):
    k: int = Field(..., ge=1)
    p: int = Field(0, ge=0)
    nu_tilde: List[float]
    phi_tilde: List[List[float]]
    sigma_tilde: List[List[float]]

    def build(self) -> VarModel:
        return VarModel(np.array(self.nu_tilde), np.array(self.phi_tilde), np.array(self.sigma_tilde), self.k, self.p)


class WeightsRequest(BaseModel):
    model: Optional[ModelPayload] = None
    k: int = Field(4, ge=1)
    p: int = Field(1, ge=0)
    horizon: int = Field(..., ge=1)
    alpha: float = Field(..., gt=0)
    rf: float = 0.0
    wealth: float = 1.0
    y: Optional[List[float]] = None
    tau: int = Field(0, ge=0)
    variant: str = "general"


class WeightsResponse(BaseModel):
    variant: str
    tau: int
    weights: List[float]
    dollars: List[float]
    labels: Optional[List[str]] = None


class SimulateRequest(BaseModel):
    model: Optional[ModelPayload] = None
    k: int = Field(4, ge=1)
    p: int = Field(1, ge=0)
    horizon: int = Field(..., ge=1)
    alpha: float = Field(..., gt=0)
    rf: float = 0.0
    w0: float = 1.0
    y0: Optional[List[float]] = None
    repetitions: int = Field(10_000, ge=1, le=MAX_API_REPETITIONS)
    seed: int = Field(0, ge=0)
    strategies: List[str] = Field(default_factory=lambda: ["general", "iid"])
    quantiles: List[float] = Field(default_factory=lambda: [0.05, 0.25, 0.5, 0.75, 0.95])


class StrategySummary(BaseModel):
    mean: float
    quantiles: Dict[str, float]
    loss_probability: float
    bankruptcy_probability: float
    flagged: int


class SimulateResponse(BaseModel):
    horizon: int
    alpha: float
    repetitions: int
    common_random_numbers: bool
    strategies: Dict[str, StrategySummary]


app = FastAPI()


def _model(payload: Optional[ModelPayload], k: int, p: int) -> VarModel:
    return payload.build() if payload is not None else weekly_markets_model(k, p)


def _status(exc: AllocationError) -> int:
    return 500 if isinstance(exc, NumericalError) else 422


@app.post("/weights", response_model=WeightsResponse)
async def weights(request: WeightsRequest):
    try:
        model = _model(request.model, request.k, request.p)
        rule = build_rule(model, RiskFreeCurve.constant(request.rf, request.horizon), request.alpha, request.horizon, request.variant)
        y = np.array(request.y) if request.y is not None else default_initial_state(model)
        w, a = evaluate_rule(rule, request.tau, y, request.wealth)
        return {
            "variant": rule.variant,
            "tau": request.tau,
            "weights": w.tolist(),
            "dollars": a.tolist(),
            "labels": model.labels[: model.k] if model.labels else None,
        }
    except AllocationError as e:
        logger.error(f"Weights error: {str(e)}")
        raise HTTPException(status_code=_status(e), detail=str(e))


@app.post("/simulate", response_model=SimulateResponse)
def simulate(request: SimulateRequest):
    try:
        model = _model(request.model, request.k, request.p)
        rf = RiskFreeCurve.constant(request.rf, request.horizon)
        config = SimulationConfig(
            repetitions=request.repetitions,
            horizon=request.horizon,
            alpha=request.alpha,
            w0=request.w0,
            y0=request.y0,
            rf=rf.rates.tolist(),
            seed=request.seed,
            strategies=request.strategies,
        )
        rules = {name: build_rule(model, rf, request.alpha, request.horizon, name) for name in request.strategies}
        paths = simulate_wealth(model, rules, config)
        threshold = request.w0 * rf.growth()
        summaries = {}
        for name in rules:
            curve = paths.ecdf(name)
            summaries[name] = {
                "mean": curve.mean,
                "quantiles": {repr(q): curve.quantile(q) for q in request.quantiles},
                "loss_probability": float(curve.below(threshold)),
                "bankruptcy_probability": float(curve(0.0)),
                "flagged": paths.flagged_count(name),
            }
        return {
            "horizon": request.horizon,
            "alpha": request.alpha,
            "repetitions": request.repetitions,
            "common_random_numbers": paths.common_random_numbers,
            "strategies": summaries,
        }
    except AllocationError as e:
        logger.error(f"Simulation error: {str(e)}")
        raise HTTPException(status_code=_status(e), detail=str(e))
    except ValueError as e:
        logger.error(f"Simulation request rejected: {str(e)}")
        raise HTTPException(status_code=422, detail=str(e))
