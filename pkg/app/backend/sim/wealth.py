"""
Monte Carlo wealth paths under one or more portfolio rules.

Rules are compared on common random numbers: every block of repetitions draws
one set of state paths from its own SeedSequence child and all strategies are
evaluated on it. Block size is fixed, so results do not depend on the number
of worker threads.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, field_validator
from tqdm import tqdm

from app.backend.model.var_model import VarModel, default_initial_state, simulate_paths
from app.backend.strategy.risk_free import RiskFreeCurve
from app.backend.strategy.rules import VARIANTS, PortfolioRule
from app.backend.utils.errors import DimensionMismatchError, HorizonMismatchError

from .ecdf import Ecdf

logger = logging.getLogger(__name__)

BLOCK_SIZE = 4096


class SimulationConfig(BaseModel):
    repetitions: int = Field(100_000, ge=1)
    horizon: int = Field(..., ge=1)
    alpha: float = Field(..., gt=0)
    w0: float = 1.0
    y0: Optional[List[float]] = None
    rf: Union[float, List[float]] = 0.0
    seed: int = Field(0, ge=0)
    strategies: List[str] = Field(default_factory=lambda: ["general", "iid"])
    threads: Optional[int] = Field(None, ge=1)
    block_size: int = Field(BLOCK_SIZE, ge=1)
    keep_paths: bool = False
    progress: bool = False

    @field_validator("strategies")
    @classmethod
    def _known_strategies(cls, value):
        unknown = [s for s in value if s not in VARIANTS]
        if unknown:
            raise ValueError(f"unknown strategies {unknown}; choose from {list(VARIANTS)}")
        if not value:
            raise ValueError("at least one strategy is required")
        return value

    def risk_free(self) -> RiskFreeCurve:
        return RiskFreeCurve.coerce(self.rf, self.horizon)

    def initial_state(self, model: VarModel) -> np.ndarray:
        if self.y0 is None:
            return default_initial_state(model)
        y0 = np.asarray(self.y0, dtype=float)
        if y0.shape != (model.n,):
            raise DimensionMismatchError(f"y0 has {y0.size} entries, model state has {model.n}")
        return y0

    @property
    def n_jobs(self) -> int:
        return self.threads or os.cpu_count() or 1


@dataclass
class WealthPaths:
    terminal: Dict[str, np.ndarray]
    flagged: Dict[str, np.ndarray]
    common_random_numbers: bool
    wealth: Optional[Dict[str, np.ndarray]] = None
    dollars: Optional[Dict[str, np.ndarray]] = None
    states: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def strategies(self) -> List[str]:
        return list(self.terminal)

    @property
    def repetitions(self) -> int:
        return next(iter(self.terminal.values())).size

    def flagged_count(self, name: str) -> int:
        return int(np.sum(self.flagged[name]))

    def ecdf(self, name: str) -> Ecdf:
        """ECDF over the finite repetitions; flagged ones are counted in ``flagged``."""
        values = self.terminal[name]
        if self.flagged_count(name):
            logger.warning(f"{name}: {self.flagged_count(name)} of {values.size} repetitions have non-finite wealth")
        return Ecdf(values[~self.flagged[name]])


def _block_seed(seed: int, block: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(block,))


def _run_block(model, rules, rf, y0, w0, horizon, seed, block, size, keep_paths):
    rng = np.random.default_rng(_block_seed(seed, block))
    states = simulate_paths(model, y0, horizon, rng, size)
    k = model.k
    out = {}
    with np.errstate(over="ignore", invalid="ignore"):
        for name, rule in rules.items():
            wealth = np.empty((size, horizon + 1)) if keep_paths else None
            dollars = np.empty((size, horizon, k)) if keep_paths else None
            w = np.full(size, float(w0))
            if keep_paths:
                wealth[:, 0] = w
            for s in range(horizon):
                a = rule.dollars(s, states[:, s])
                excess = states[:, s + 1, :k] - rf.rate(s + 1)
                w = w * rf.gross(s + 1) + np.sum(a * excess, axis=1)
                if keep_paths:
                    wealth[:, s + 1] = w
                    dollars[:, s] = a
            out[name] = (w, wealth, dollars)
    return out, (states if keep_paths else None)


def simulate_wealth(
    model: VarModel,
    rules: Union[PortfolioRule, Mapping[str, PortfolioRule]],
    config: SimulationConfig,
) -> WealthPaths:
    """
    Terminal wealth per repetition and strategy, propagated with dollar
    allocations: W_t = W_{t-1} R_{f,t} + a'_{t-1} X_t.
    """
    if isinstance(rules, PortfolioRule):
        rules = {rules.variant: rules}
    for name, rule in rules.items():
        if rule.horizon != config.horizon:
            raise HorizonMismatchError(f"rule {name!r} has horizon {rule.horizon}, simulation asks for {config.horizon}")
        if rule.n != model.n:
            raise DimensionMismatchError(f"rule {name!r} expects states of length {rule.n}, model has {model.n}")
    rf = config.risk_free()
    y0 = config.initial_state(model)
    reps, size = config.repetitions, config.block_size
    blocks = [(b, min(size, reps - b * size)) for b in range((reps + size - 1) // size)]
    logger.info(
        f"simulating {reps} repetitions in {len(blocks)} blocks, T={config.horizon}, alpha={config.alpha}, "
        f"strategies={list(rules)}, seed={config.seed}, jobs={config.n_jobs}"
    )

    results = Parallel(n_jobs=config.n_jobs, backend="threading")(
        delayed(_run_block)(model, rules, rf, y0, config.w0, config.horizon, config.seed, b, n, config.keep_paths)
        for b, n in tqdm(blocks, desc="blocks", disable=not config.progress)
    )

    terminal = {name: np.concatenate([r[0][name][0] for r in results]) for name in rules}
    flagged = {name: ~np.isfinite(values) for name, values in terminal.items()}
    paths = WealthPaths(terminal=terminal, flagged=flagged, common_random_numbers=len(rules) > 1)
    if config.keep_paths:
        paths.wealth = {name: np.concatenate([r[0][name][1] for r in results]) for name in rules}
        paths.dollars = {name: np.concatenate([r[0][name][2] for r in results]) for name in rules}
        paths.states = np.concatenate([r[1] for r in results])
    for name in rules:
        if paths.flagged_count(name):
            logger.warning(f"{name}: {paths.flagged_count(name)} repetitions flagged with non-finite wealth")
    return paths
