"""
Numerical ground truth for the closed-form rules.

For exponential utility the value function separates as

    V(s, W, Y) = -exp(-alpha G_s W) psi_s(Y),   G_s = prod_{i=s+1}^{T} R_{f,i},

so backward induction only has to carry log psi_s on a grid of states. With
u = alpha G_{s+1} a the stage problem is

    log psi_s(y) = min_u log E[exp(log psi_{s+1}(Y') - u'(L Y' - r_{f,s+1} 1)) | y].

The last stage is the Gaussian MGF of a linear form; earlier stages use a
tensor Gauss-Hermite rule over Y_{s+1}, so the grid of decision-s states is
the tree of quadrature nodes grown from Y_0. Each rule is centred where the
excess return is zero, which is where the optimal stage measure puts its mass,
and carries the Gaussian likelihood ratio in its weights. Every stage problem
is convex in u and is solved by damped Newton from u = 0 with steps capped in
the excess-return covariance norm.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import linalg
from scipy.special import logsumexp

from app.backend.model.var_model import StateVector, VarModel
from app.backend.strategy.risk_free import RiskFreeCurve
from app.backend.strategy.rules import PortfolioRule
from app.backend.utils.errors import (
    ConvergenceError,
    DimensionMismatchError,
    MgfUndefinedError,
    OracleCostError,
    UsageError,
)
from app.backend.utils.numerics import check_positive_definite, is_symmetric

from .quadrature import gauss_hermite_expectation, gaussian_rule

logger = logging.getLogger(__name__)


class QuadraticFormSpec(BaseModel):
    """E[exp(-1/2 y'By - b'y - c)] with y ~ N(mean, cov)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    B: np.ndarray
    b: np.ndarray
    c: float = 0.0
    mean: np.ndarray
    cov: np.ndarray

    @field_validator("B", "b", "mean", "cov", mode="before")
    @classmethod
    def _as_array(cls, value):
        return np.atleast_1d(np.asarray(value, dtype=float))

    @model_validator(mode="after")
    def _check(self):
        d = self.mean.shape[0]
        if self.B.shape != (d, d) or self.b.shape != (d,) or self.cov.shape != (d, d):
            raise DimensionMismatchError(f"B, b and cov must match the mean dimension {d}")
        if not is_symmetric(self.B):
            raise ValueError("B must be symmetric")
        check_positive_definite(self.cov, name="cov")
        return self

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


class OracleConfig(BaseModel):
    nodes: int = Field(40, ge=10, description="Gauss-Hermite nodes per dimension")
    tol: float = Field(1e-10, gt=0, description="Newton step tolerance relative to 1 + |u|")
    max_iter: int = Field(500, ge=1)
    max_step: float = Field(4.0, gt=0, description="Newton step cap in the excess-return covariance norm")
    recentre: bool = Field(True, description="centre each rule at zero excess return instead of the conditional mean")
    max_horizon: int = Field(4, ge=1)
    max_dim: int = Field(3, ge=1)
    max_evaluations: int = Field(10**7, ge=1)

    def check_cost(self, dim: int, horizon: int) -> int:
        """Number of tree states at the last decision, nodes^{dim (T-1)}; refuses runs over budget."""
        if horizon < 1:
            raise UsageError(f"horizon must be >= 1, got {horizon}")
        if horizon > self.max_horizon:
            raise OracleCostError(f"oracle horizon is capped at T <= {self.max_horizon}, got T={horizon}")
        if dim > self.max_dim:
            raise OracleCostError(f"oracle state dimension is capped at k+p <= {self.max_dim}, got {dim}")
        evaluations = self.nodes ** (dim * (horizon - 1))
        if evaluations > self.max_evaluations:
            raise OracleCostError(
                f"{self.nodes}^({dim}*{horizon - 1}) = {evaluations:.3e} tree states exceed the budget of "
                f"{self.max_evaluations:.0e}; lower --T, the dimension or the node count"
            )
        return evaluations


############ MGF of a Gaussian quadratic form ############

def log_mgf_quadratic(spec: QuadraticFormSpec) -> float:
    C = np.linalg.cholesky(spec.cov)
    K = np.eye(spec.dim) + C.T @ spec.B @ C
    K = 0.5 * (K + K.T)
    eig = np.linalg.eigvalsh(K)
    if eig.min() <= 0:
        raise MgfUndefinedError(f"E[exp(-1/2 y'By - b'y)] diverges: I + C'BC has eigenvalue {eig.min():.3e} <= 0")
    g = spec.B @ spec.mean + spec.b
    Cg = C.T @ g
    quad = Cg @ linalg.solve(K, Cg, assume_a="pos")
    m = spec.mean
    return float(-0.5 * np.sum(np.log(eig)) - spec.c - 0.5 * m @ spec.B @ m - spec.b @ m + 0.5 * quad)


def mgf_quadratic(spec: QuadraticFormSpec) -> float:
    """
    |I + C'BC|^{-1/2} exp(-c - 1/2 m'Bm - b'm + 1/2 g'C (I + C'BC)^{-1} C'g),  g = Bm + b,

    with cov = CC'. Raises MgfUndefinedError when I + C'BC is not positive definite.
    """
    return math.exp(log_mgf_quadratic(spec))


def _quadratic_integrand(spec: QuadraticFormSpec):
    def integrand(y):
        return np.exp(-0.5 * np.einsum("ni,ij,nj->n", y, spec.B, y) - y @ spec.b - spec.c)

    return integrand


def mgf_quadrature(spec: QuadraticFormSpec, nodes: int = 40) -> float:
    return gauss_hermite_expectation(_quadratic_integrand(spec), spec.mean, spec.cov, nodes)


def mgf_monte_carlo(spec: QuadraticFormSpec, draws: int = 10**6, seed: int = 0, chunk: int = 2**16) -> Tuple[float, float]:
    """Sample mean and its standard error over ``draws`` normal draws."""
    rng = np.random.default_rng(seed)
    C = np.linalg.cholesky(spec.cov)
    integrand = _quadratic_integrand(spec)
    total = 0.0
    total_sq = 0.0
    remaining = int(draws)
    while remaining > 0:
        size = min(chunk, remaining)
        values = integrand(spec.mean + rng.standard_normal((size, spec.dim)) @ C.T)
        total += float(values.sum())
        total_sq += float(np.square(values).sum())
        remaining -= size
    mean = total / draws
    var = max(total_sq / draws - mean**2, 0.0) * draws / max(draws - 1, 1)
    return mean, math.sqrt(var / draws)


############ Batched convex stage solver ############

StageObjective = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]


def _linear_mgf_objective(excess_mean: np.ndarray, cov: np.ndarray) -> StageObjective:
    """log E[exp(-u'X)] = -u'mu + 1/2 u'Sigma u for X ~ N(mu, Sigma), one mu per state."""

    def objective(u):
        Su = u @ cov
        value = -np.sum(u * excess_mean, axis=1) + 0.5 * np.sum(u * Su, axis=1)
        grad = Su - excess_mean
        hess = np.broadcast_to(cov, (u.shape[0],) + cov.shape)
        return value, grad, hess

    return objective


def _quadrature_objective(log_terms: np.ndarray, excess: np.ndarray) -> StageObjective:
    """logsumexp_j(log_terms_j - u'X_j) per state; log_terms (B, N), excess (B, N, k)."""

    def objective(u):
        z = log_terms - np.einsum("bnk,bk->bn", excess, u)
        value = logsumexp(z, axis=1)
        pi = np.exp(z - value[:, None])
        mean = np.einsum("bn,bnk->bk", pi, excess)
        second = np.einsum("bn,bnk,bnl->bkl", pi, excess, excess)
        hess = second - np.einsum("bk,bl->bkl", mean, mean)
        return value, -mean, hess

    return objective


RIDGE = 1e-10


def _newton(
    objective: StageObjective,
    u0: np.ndarray,
    config: OracleConfig,
    states: np.ndarray,
    stage: int,
    metric: np.ndarray,
):
    """
    Damped Newton with backtracking for a batch of independent convex problems.

    ``metric`` is the excess-return covariance: steps longer than
    ``config.max_step`` in its norm are shortened, and a ridge of the same shape
    keeps directions solvable where the quadrature mass sits on a single node.
    Neither changes the fixed point.
    """
    root = np.linalg.cholesky(metric)
    ridge = RIDGE * metric
    u = u0.copy()
    value, grad, hess = objective(u)
    active = np.ones(u.shape[0], dtype=bool)
    for _ in range(config.max_iter):
        step = -np.linalg.solve(hess + ridge, grad[..., None])[..., 0]
        length = np.linalg.norm(step @ root, axis=1)
        step *= np.minimum(1.0, config.max_step / np.maximum(length, 1e-300))[:, None]
        small = np.linalg.norm(step, axis=1) <= config.tol * (1.0 + np.linalg.norm(u, axis=1))
        t = np.ones(u.shape[0])
        candidate = u + step
        new_value, new_grad, new_hess = objective(candidate)
        for _ in range(60):
            slack = 1e-12 * (1.0 + np.abs(value))
            bad = ~(new_value <= value + 1e-4 * t * np.sum(grad * step, axis=1) + slack) & active
            if not bad.any():
                break
            t = np.where(bad, 0.5 * t, t)
            candidate = u + t[:, None] * step
            new_value, new_grad, new_hess = objective(candidate)
        u = np.where(active[:, None], candidate, u)
        value = np.where(active, new_value, value)
        grad = np.where(active[:, None], new_grad, grad)
        hess = np.where(active[:, None, None], new_hess, hess)
        active &= ~small
        if not active.any():
            return u, value
    worst = int(np.flatnonzero(active)[0])
    raise ConvergenceError(
        f"stage {stage}: Newton did not converge in {config.max_iter} iterations at state {np.array2string(states[worst], precision=6)}"
    )


############ Tree of quadrature states ############

def _children(model: VarModel, states: np.ndarray, t: int, nodes: int, rate: Optional[float]):
    """
    Quadrature nodes of Y_t given each row of ``states`` = Y_{t-1}, shape (M, N, k+p),
    with per-parent log-weights of shape (M, N).

    The rule for N(m, S) is placed around c = m + S L'(LSL')^{-1}(r 1 - Lm), the
    conditional mean of Y_t given a zero excess return, and reweighted by
    log N(c + e; m, S) - log N(c + e; c, S) = -e'S^{-1}(c - m) - 1/2 (c - m)'S^{-1}(c - m).
    S^{-1}(c - m) is (LSL')^{-1}(r 1 - Lm) padded with zeros. ``rate=None`` keeps the rule at m.
    """
    factor = model.factor(t)
    offsets, log_w = gaussian_rule(factor, nodes)
    k = model.k
    means = model.nu_tilde + states @ model.phi_tilde.T
    if rate is None:
        return means[:, None, :] + offsets[None, :, :], np.broadcast_to(log_w, (states.shape[0], log_w.size))
    gap = rate - means[:, :k]
    tilt = linalg.solve(factor.matrix[:k, :k], gap.T, assume_a="pos").T
    centers = means + tilt @ factor.matrix[:k, :]
    log_ratio = -tilt @ offsets[:, :k].T - 0.5 * np.sum(tilt * gap, axis=1)[:, None]
    return centers[:, None, :] + offsets[None, :, :], log_w[None, :] + log_ratio


def _grow_tree(model: VarModel, y0: np.ndarray, horizon: int, config: OracleConfig, rf: RiskFreeCurve) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """States at decisions 0..T-1 in tree order; node i of level s owns children i*N..(i+1)*N-1."""
    levels = [y0[None, :]]
    log_weights = []
    for s in range(1, horizon):
        children, log_w = _children(model, levels[-1], s, config.nodes, rf.rate(s) if config.recentre else None)
        levels.append(children.reshape(-1, model.n))
        log_weights.append(log_w)
    return levels, log_weights


def _setup(model: VarModel, y0, alpha: float, rf, horizon: int, config: Optional[OracleConfig]):
    config = config or OracleConfig()
    if alpha <= 0:
        raise UsageError(f"alpha must be positive, got {alpha}")
    rf = RiskFreeCurve.coerce(rf, horizon)
    if not model.supports_horizon(horizon):
        raise UsageError(f"Sigma~ table covers {model.periods} periods, horizon {horizon} requested")
    config.check_cost(model.n, horizon)
    y0 = y0.y if isinstance(y0, StateVector) else np.asarray(y0, dtype=float)
    if y0.shape != (model.n,):
        raise DimensionMismatchError(f"y0 has shape {y0.shape}, expected ({model.n},)")
    return config, rf, y0


############ Policies ############

class TabulatedPolicy:
    """Dollar allocations stored per decision in tree order."""

    def __init__(self, dollars: Sequence[np.ndarray]):
        self.table = [np.asarray(a, dtype=float) for a in dollars]

    @property
    def horizon(self) -> int:
        return len(self.table)

    def dollars(self, s: int, states: np.ndarray, wealth: np.ndarray) -> np.ndarray:
        if self.table[s].shape[0] != states.shape[0]:
            raise DimensionMismatchError(f"tabulated policy has {self.table[s].shape[0]} states at decision {s}, tree has {states.shape[0]}")
        return self.table[s]


Policy = Union[PortfolioRule, TabulatedPolicy, Sequence[np.ndarray]]


def _policy_dollars(policy: Policy) -> Callable[[int, np.ndarray, np.ndarray], np.ndarray]:
    if isinstance(policy, (PortfolioRule, TabulatedPolicy)):
        if isinstance(policy, PortfolioRule):
            return lambda s, states, wealth: policy.dollars(s, states)
        return policy.dollars
    weights = [np.asarray(w, dtype=float) for w in policy]
    return lambda s, states, wealth: wealth[:, None] * weights[s][None, :]


def expected_utility(
    model: VarModel,
    policy: Policy,
    y0,
    w0: float,
    alpha: float,
    rf,
    horizon: int,
    config: Optional[OracleConfig] = None,
) -> float:
    """
    E[-exp(-alpha W_T)] under ``policy``, by nested quadrature over the
    innovations with wealth propagated as W_t = W_{t-1} R_{f,t} + a'_{t-1} X_t.

    ``policy`` is a PortfolioRule, a TabulatedPolicy or one weight vector per period.
    """
    config, rf, y0 = _setup(model, y0, alpha, rf, horizon, config)
    if not isinstance(policy, (PortfolioRule, TabulatedPolicy)) and len(policy) != horizon:
        raise UsageError(f"{len(policy)} weight vectors given for horizon {horizon}")
    if isinstance(policy, PortfolioRule) and policy.horizon != horizon:
        raise UsageError(f"rule horizon {policy.horizon} differs from {horizon}")
    dollars_of = _policy_dollars(policy)
    k = model.k
    states, wealth = y0[None, :], np.array([float(w0)])
    log_weights: List[np.ndarray] = []

    for s in range(horizon - 1):
        a = dollars_of(s, states, wealth)
        children, log_w = _children(model, states, s + 1, config.nodes, rf.rate(s + 1) if config.recentre else None)
        excess = children[..., :k] - rf.rate(s + 1)
        wealth = (wealth[:, None] * rf.gross(s + 1) + np.einsum("mnk,mk->mn", excess, a)).reshape(-1)
        states = children.reshape(-1, model.n)
        log_weights.append(log_w)

    t = horizon
    a = dollars_of(t - 1, states, wealth)
    mean = model.nu + states @ model.phi.T - rf.rate(t)
    cov = model.asset_covariance(t)
    # log(-E[U]) at the last decision, exact for a normal excess return
    log_loss = -alpha * (rf.gross(t) * wealth + np.sum(a * mean, axis=1)) + 0.5 * alpha**2 * np.einsum("mk,kl,ml->m", a, cov, a)
    for log_w in reversed(log_weights):
        log_loss = logsumexp(log_loss.reshape(log_w.shape) + log_w, axis=1)
    return -float(np.exp(log_loss[0]))


############ Backward induction ############

@dataclass
class OracleSolution:
    alpha: float
    horizon: int
    rf: RiskFreeCurve
    w0: float
    states: List[np.ndarray]
    log_weights: List[np.ndarray]
    dollars: List[np.ndarray]
    wealth: List[np.ndarray]
    log_psi: List[np.ndarray]
    config: OracleConfig
    model: VarModel

    @property
    def value(self) -> float:
        """V(0, W_0, Y_0) = -exp(-alpha G_0 W_0) psi_0(Y_0)."""
        return -math.exp(-self.alpha * self.rf.growth() * self.w0 + float(self.log_psi[0][0]))

    def weights(self, s: int) -> np.ndarray:
        return self.dollars[s] / self.wealth[s][:, None]

    def as_policy(self) -> TabulatedPolicy:
        return TabulatedPolicy(self.dollars)

    def conditional_value(self, s: int, index: int, dollars) -> float:
        """E_s[V(s+1, W_{s+1}, Y_{s+1})] at tree node ``index`` of decision ``s`` for the given dollars."""
        a = np.atleast_2d(np.asarray(dollars, dtype=float))
        u = self.alpha * self.rf.discount(s) * a
        state = self.states[s][index : index + 1]
        log_value = float(_stage_objective(self, s, state, index)(u)[0][0])
        growth = self.rf.compounding(s + 1, self.horizon)
        return -math.exp(-self.alpha * growth * float(self.wealth[s][index]) + log_value)


def _stage_objective(solution: OracleSolution, s: int, states: np.ndarray, start: int) -> StageObjective:
    model, rf, k = solution.model, solution.rf, solution.model.k
    t = s + 1
    if s == solution.horizon - 1:
        excess_mean = model.nu + states @ model.phi.T - rf.rate(t)
        return _linear_mgf_objective(excess_mean, model.asset_covariance(t))
    N = solution.log_weights[s].shape[1]
    block = slice(start * N, (start + states.shape[0]) * N)
    children = solution.states[s + 1][block].reshape(states.shape[0], N, model.n)
    log_terms = solution.log_weights[s][start : start + states.shape[0]] + solution.log_psi[s + 1][block].reshape(-1, N)
    return _quadrature_objective(log_terms, children[..., :k] - rf.rate(t))


def numeric_optimal_weights(
    model: VarModel,
    y0,
    w0: float,
    alpha: float,
    rf,
    horizon: int,
    config: Optional[OracleConfig] = None,
    batch_size: int = 2048,
) -> OracleSolution:
    """
    Backward induction on the quadrature tree; every stage problem is solved
    numerically from u = 0. Returns grid-tabulated optimal dollars and weights.
    """
    config, rf, y0 = _setup(model, y0, alpha, rf, horizon, config)
    states, log_weights = _grow_tree(model, y0, horizon, config, rf)
    logger.info(f"oracle: k={model.k}, p={model.p}, T={horizon}, nodes={config.nodes}, {states[-1].shape[0]} states at the last decision")
    solution = OracleSolution(
        alpha=float(alpha),
        horizon=horizon,
        rf=rf,
        w0=float(w0),
        states=states,
        log_weights=log_weights,
        dollars=[None] * horizon,
        wealth=[None] * horizon,
        log_psi=[None] * horizon,
        config=config,
        model=model,
    )

    for s in range(horizon - 1, -1, -1):
        level = states[s]
        metric = model.asset_covariance(s + 1)
        u_all = np.empty((level.shape[0], model.k))
        lpsi = np.empty(level.shape[0])
        for start in range(0, level.shape[0], batch_size):
            chunk = level[start : start + batch_size]
            objective = _stage_objective(solution, s, chunk, start)
            u, value = _newton(objective, np.zeros((chunk.shape[0], model.k)), config, chunk, s, metric)
            u_all[start : start + chunk.shape[0]] = u
            lpsi[start : start + chunk.shape[0]] = value
        solution.log_psi[s] = lpsi
        solution.dollars[s] = u_all / (alpha * rf.discount(s))
        logger.debug(f"oracle stage {s} solved on {level.shape[0]} states")

    wealth = np.array([float(w0)])
    for s in range(horizon):
        solution.wealth[s] = wealth
        if s < horizon - 1:
            N = log_weights[s].shape[1]
            children = states[s + 1].reshape(-1, N, model.n)
            excess = children[..., : model.k] - rf.rate(s + 1)
            wealth = (wealth[:, None] * rf.gross(s + 1) + np.einsum("mnk,mk->mn", excess, solution.dollars[s])).reshape(-1)
    return solution


def compare_with_rule(solution: OracleSolution, rule: PortfolioRule) -> List[float]:
    """Per decision: max |oracle - rule| dollars over grid states over max |rule| dollars."""
    if rule.horizon != solution.horizon:
        raise UsageError(f"rule horizon {rule.horizon} differs from oracle horizon {solution.horizon}")
    deviations = []
    for s in range(solution.horizon):
        closed = rule.dollars(s, solution.states[s])
        scale = float(np.max(np.abs(closed)))
        diff = float(np.max(np.abs(solution.dollars[s] - closed)))
        deviations.append(diff / scale if scale > 0 else diff)
    return deviations


def value_deviation(solution: OracleSolution, rule: PortfolioRule) -> float:
    """Relative gap between the oracle value at Y_0 and the closed-form value function."""
    closed = rule.value(0, solution.states[0][0], solution.w0)
    return abs(solution.value - closed) / abs(closed)


############ Random instances ############

def random_model(k: int, p: int, rng: np.random.Generator, radius: float = 0.5, scale: float = 0.02) -> VarModel:
    """Stable VAR(1) with weekly-return-like magnitudes and a well-conditioned Sigma~."""
    n = k + p
    phi = rng.normal(size=(n, n))
    rho = max(float(np.max(np.abs(np.linalg.eigvals(phi)))), 1e-12)
    phi *= rng.uniform(0.1, radius) / rho
    G = rng.normal(size=(n, n))
    sigma = scale**2 * (G @ G.T / n + 0.5 * np.eye(n))
    nu = rng.normal(0.002, 0.005, size=n)
    return VarModel(nu, phi, 0.5 * (sigma + sigma.T), k, p)


def random_quadratic_spec(dim: int, rng: np.random.Generator) -> QuadraticFormSpec:
    M = rng.normal(size=(dim, dim))
    G = rng.normal(size=(dim, dim))
    B = 0.5 * M @ M.T / dim
    cov = G @ G.T / dim + 0.2 * np.eye(dim)
    return QuadraticFormSpec(
        B=0.5 * (B + B.T),
        b=rng.normal(0.0, 0.3, size=dim),
        c=float(rng.normal(0.0, 0.1)),
        mean=rng.normal(0.0, 0.5, size=dim),
        cov=0.5 * (cov + cov.T),
    )
