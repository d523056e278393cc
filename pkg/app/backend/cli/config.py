"""
Run configuration for the command line.

Precedence: command-line flags > JSON file given with --config > environment
(.env is loaded first) > per-command defaults.
"""

import json
import os
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.backend.model.reference import weekly_markets_model
from app.backend.model.var_model import VarModel, load_model
from app.backend.strategy.risk_free import RiskFreeCurve
from app.backend.strategy.rules import VARIANTS
from app.backend.utils.errors import DataError, DimensionMismatchError, UsageError

Command = Literal["fit", "weights", "simulate", "compare", "verify"]

COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "fit": {},
    "weights": {"horizons": [1]},
    "simulate": {"strategies": ["general", "iid"]},
    "compare": {"strategies": ["general", "iid"]},
    "verify": {"k": 1, "p": 1, "horizons": [3], "alphas": [2.0]},
}

ENV_KEYS = {"ALLOC_THREADS": "threads"}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: Command
    input: Optional[str] = None
    model: Optional[str] = None
    k: Optional[int] = Field(None, ge=1)
    p: Optional[int] = Field(None, ge=0)
    horizons: List[int] = Field(default_factory=lambda: [52])
    alphas: List[float] = Field(default_factory=lambda: [0.8])
    rf: str = "0"
    w0: float = 1.0
    y0: Optional[List[float]] = None
    reps: int = Field(100_000, ge=1)
    seed: int = Field(0, ge=0)
    threads: Optional[int] = Field(None, ge=1)
    out: Optional[str] = None
    variant: str = "general"
    strategies: List[str] = Field(default_factory=lambda: ["general", "iid"])
    dump_samples: bool = False
    exact_ecdf: bool = False
    audit: bool = False
    probes: List[Tuple[float, float]] = Field(default_factory=lambda: [(60.0, 80.0)])
    upper_quantile: float = Field(0.5, ge=0.0, lt=1.0)
    nodes: int = Field(40, ge=10)
    dof: Literal["regressors", "plain"] = "regressors"
    tolerance: float = Field(1e-6, gt=0)

    @field_validator("horizons")
    @classmethod
    def _positive_horizons(cls, value):
        if not value or any(h < 1 for h in value):
            raise ValueError("every horizon must be >= 1")
        return value

    @field_validator("alphas")
    @classmethod
    def _positive_alphas(cls, value):
        if not value or any(a <= 0 for a in value):
            raise ValueError("every alpha must be positive")
        return value

    @field_validator("variant")
    @classmethod
    def _known_variant(cls, value):
        if value not in VARIANTS:
            raise ValueError(f"unknown variant {value!r}; choose from {list(VARIANTS)}")
        return value

    @field_validator("strategies")
    @classmethod
    def _known_strategies(cls, value):
        unknown = [s for s in value if s not in VARIANTS]
        if not value or unknown:
            raise ValueError(f"strategies must be drawn from {list(VARIANTS)}, got {value}")
        return value

    @field_validator("probes")
    @classmethod
    def _ordered_probes(cls, value):
        for lo, hi in value:
            if hi < lo:
                raise ValueError(f"probe interval ({lo}, {hi}) is empty")
        return value

    def risk_free(self, horizon: int) -> RiskFreeCurve:
        try:
            rate = float(self.rf)
        except ValueError:
            return RiskFreeCurve.from_file(self.rf, horizon)
        return RiskFreeCurve.constant(rate, horizon)

    @property
    def dims(self) -> Tuple[int, int]:
        """(k, p); unset values fall back to 4 assets and 1 predictor."""
        return (self.k if self.k is not None else 4, self.p if self.p is not None else 1)

    def load_model(self) -> VarModel:
        """
        The model file given with --model, else the bundled weekly fit split as k + p.
        Explicit --k/--p re-split a model file with the same total dimension.
        """
        if not self.model:
            return weekly_markets_model(*self.dims)
        model = load_model(self.model)
        if self.k is None and self.p is None:
            return model
        k = self.k if self.k is not None else model.n - (self.p or 0)
        p = self.p if self.p is not None else model.n - k
        if k + p != model.n:
            raise DimensionMismatchError(f"{self.model} has {model.n} series, --k {k} --p {p} asks for {k + p}")
        if (k, p) == (model.k, model.p):
            return model
        sigma = model.sigma(1) if model.is_constant else model.sigma_table
        return VarModel(model.nu_tilde, model.phi_tilde, sigma, k, p, labels=model.labels)


def _read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise DataError(f"config file {path} must hold a JSON object")
    return data


def _from_env() -> Dict[str, Any]:
    values = {}
    for env_key, field_name in ENV_KEYS.items():
        raw = os.getenv(env_key)
        if raw:
            values[field_name] = raw
    return values


def build_run_config(command: str, flags: Dict[str, Any], config_path: Optional[str] = None) -> RunConfig:
    merged: Dict[str, Any] = dict(COMMAND_DEFAULTS.get(command, {}))
    merged.update(_from_env())
    if config_path:
        merged.update(_read_config_file(config_path))
    merged.update({key: value for key, value in flags.items() if value is not None})
    merged["command"] = command
    try:
        return RunConfig(**merged)
    except ValidationError as exc:
        reasons = "; ".join(f"{'.'.join(map(str, e['loc'])) or 'config'}: {e['msg']}" for e in exc.errors())
        raise UsageError(f"invalid configuration: {reasons}") from exc
