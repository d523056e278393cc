"""
Closed-form multi-period allocations for an exponential-utility investor.

All rules are represented by dollar allocations that are affine in the state,

    a_tau = (1 / (alpha D_tau)) (A_tau Y_tau + d_tau),   D_tau = prod_{i=tau+2}^{T} R_{f,i},

so that the portfolio weights are w_tau = a_tau / W_tau. Wealth never enters
the dollar amounts, which keeps the rule defined when W crosses zero.
"""

import logging
from typing import List, Literal, Optional, Tuple

import numpy as np

from app.backend.model.var_model import StateVector, VarModel, stationary_covariance, stationary_mean
from app.backend.utils.errors import DataError, DimensionMismatchError, UsageError, ZeroWealthError
from app.backend.utils.numerics import CholeskyFactor, format_float, format_row

from .risk_free import RiskFreeCurve

logger = logging.getLogger(__name__)

Variant = Literal["general", "theorem", "nopred", "iid"]
VARIANTS = ("general", "theorem", "nopred", "iid")
IidSource = Literal["stationary", "innovation"]


class PortfolioRule:
    """Precomputed (A_tau, d_tau, D_tau) for tau = 0..T-1."""

    def __init__(
        self,
        variant: str,
        alpha: float,
        horizon: int,
        rf: RiskFreeCurve,
        A: np.ndarray,
        d: np.ndarray,
        D: np.ndarray,
        value_terms: Optional[List[Tuple[np.ndarray, np.ndarray, float]]] = None,
    ):
        if alpha <= 0:
            raise UsageError(f"alpha must be positive, got {alpha}")
        self.variant = variant
        self.alpha = float(alpha)
        self.horizon = int(horizon)
        self.rf = rf
        self.A = np.array(A, dtype=float)
        self.d = np.array(d, dtype=float)
        self.D = np.array(D, dtype=float)
        if self.A.shape[0] != self.horizon or self.d.shape != self.A.shape[:2] or self.D.shape != (self.horizon,):
            raise DimensionMismatchError("rule blocks do not match the horizon")
        if np.any(self.D <= 0):
            raise UsageError("discount factors must be positive")
        for arr in (self.A, self.d, self.D):
            arr.flags.writeable = False
        self.value_terms = value_terms

    def __repr__(self) -> str:
        return f"PortfolioRule(variant={self.variant!r}, alpha={self.alpha}, horizon={self.horizon}, k={self.k})"

    @property
    def k(self) -> int:
        return self.A.shape[1]

    @property
    def n(self) -> int:
        return self.A.shape[2]

    def _check_tau(self, tau: int):
        if not 0 <= tau < self.horizon:
            raise UsageError(f"decision period must lie in 0..{self.horizon - 1}, got {tau}")

    def dollars(self, tau: int, y) -> np.ndarray:
        """Dollar allocation at decision tau; ``y`` may be a stack of states (..., k+p)."""
        self._check_tau(tau)
        y = y.y if isinstance(y, StateVector) else np.asarray(y, dtype=float)
        if y.shape[-1] != self.n:
            raise DimensionMismatchError(f"state has length {y.shape[-1]}, rule expects {self.n}")
        return (y @ self.A[tau].T + self.d[tau]) / (self.alpha * self.D[tau])

    def weights(self, tau: int, y, wealth) -> np.ndarray:
        wealth = np.asarray(wealth, dtype=float)
        if np.any(wealth == 0):
            raise ZeroWealthError("portfolio weights are undefined at zero wealth; use dollar allocations")
        return self.dollars(tau, y) / wealth[..., None]

    def value(self, tau: int, y, wealth: float) -> float:
        """Closed-form value function V(tau, W, Y) before the decision at tau."""
        if self.value_terms is None:
            raise UsageError(f"value function is only available for the general rule, not {self.variant!r}")
        self._check_tau(tau)
        Q, q, kappa = self.value_terms[tau]
        y = y.y if isinstance(y, StateVector) else np.asarray(y, dtype=float)
        growth = self.rf.compounding(tau + 1, self.horizon)
        exponent = -self.alpha * growth * wealth - 0.5 * y @ Q @ y - q @ y - kappa
        return -float(np.exp(exponent))


def evaluate_rule(rule: PortfolioRule, tau: int, y, wealth: float):
    """(weights, dollars) at decision ``tau``; raises ZeroWealthError at W = 0."""
    dollars = rule.dollars(tau, y)
    if wealth == 0:
        raise ZeroWealthError("weights requested at zero wealth")
    return dollars / wealth, dollars


############ Shared checks ############

def _check_inputs(model: VarModel, rf: RiskFreeCurve, alpha: float, horizon: int):
    if horizon < 1:
        raise UsageError(f"horizon must be >= 1, got {horizon}")
    if alpha <= 0:
        raise UsageError(f"alpha must be positive, got {alpha}")
    if rf.horizon < horizon:
        raise UsageError(f"risk-free curve covers {rf.horizon} periods, horizon {horizon} requested")
    if not model.supports_horizon(horizon):
        raise UsageError(f"Sigma~ table covers {model.periods} periods, horizon {horizon} requested")


def _wealth(wealth: float):
    if wealth == 0:
        raise ZeroWealthError("weights are undefined at zero wealth; the dollar allocation is wealth-free")
    return float(wealth)


def _state(y, n: int) -> np.ndarray:
    y = y.y if isinstance(y, StateVector) else np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise DimensionMismatchError(f"state has shape {y.shape}, expected ({n},)")
    return y


############ Last period (mean-variance) ############

def weights_last(model: VarModel, y_prev, rf, alpha: float, wealth: float, t: Optional[int] = None) -> np.ndarray:
    """
    w*_{T-1} = (1 / (alpha W_{T-1})) Sigma(T)^{-1} (nu - r_{f,T} 1 + Phi Y_{T-1}).

    ``t`` is the period in which the return realizes (T); it defaults to the
    last period of the risk-free curve.
    """
    wealth = _wealth(wealth)
    if alpha <= 0:
        raise UsageError(f"alpha must be positive, got {alpha}")
    y = _state(y_prev, model.n)
    if not isinstance(rf, RiskFreeCurve):
        rf = RiskFreeCurve.constant(rf, t or 1) if np.ndim(rf) == 0 else RiskFreeCurve(rf)
    t = t or rf.horizon
    excess = model.nu - rf.rate(t) + model.phi @ y
    factor = CholeskyFactor(model.asset_covariance(t), name=f"Sigma({t})")
    return factor.solve(excess) / (alpha * wealth)


############ Exact recursion ############

def _exact_terms(model: VarModel, rf: RiskFreeCurve, horizon: int):
    """
    Backward recursion of the exponential-quadratic value function.

    Continuation before decision s+1:  psi_{s+1}(Y) = exp(-1/2 Y'QY - q'Y - kappa).
    Returns per-decision (A, d) and per-decision value terms (Q_s, q_s, kappa_s).
    """
    k, n = model.k, model.n
    nu, phi = model.nu_tilde, model.phi_tilde
    ones = np.ones(k)
    Q = np.zeros((n, n))
    q = np.zeros(n)
    kappa = 0.0
    A = np.zeros((horizon, k, n))
    d = np.zeros((horizon, k))
    terms: List[Tuple[np.ndarray, np.ndarray, float]] = [None] * horizon

    for s in range(horizon - 1, -1, -1):
        t = s + 1
        r = rf.rate(t)
        S = model.factor(t)
        C = S.lower
        CQC = C.T @ Q @ C
        K = CholeskyFactor(np.eye(n) + 0.5 * (CQC + CQC.T), name=f"I + C'QC at t={t}")

        def m_solve(x, C=C, K=K):
            # (Sigma~^{-1} + Q)^{-1} x = C K^{-1} C' x
            return C @ K.solve(C.T @ x)

        psi = S.solve(phi)
        s_inv_nu = S.solve(nu)
        h0 = s_inv_nu - q
        m_psi = m_solve(psi)
        m_h0 = m_solve(h0)
        LML = m_solve(model.selector.matrix.T)[:k]
        P = CholeskyFactor(0.5 * (LML + LML.T), name=f"LML' at t={t}")

        A[s] = P.solve(m_psi[:k])
        d[s] = P.solve(m_h0[:k] - r * ones)

        Q_next = phi.T @ psi - psi.T @ m_psi + m_psi[:k].T @ A[s]
        q_next = psi.T @ (nu - m_h0 + m_solve(model.selector.transpose(d[s])))
        kappa = kappa + 0.5 * K.logdet() + 0.5 * nu @ s_inv_nu - 0.5 * h0 @ m_h0 + 0.5 * (m_h0[:k] - r * ones) @ d[s]
        Q, q = 0.5 * (Q_next + Q_next.T), q_next
        terms[s] = (Q, q, float(kappa))
    return A, d, terms


############ Stacked-state closed form (theorem variant) ############

def _theorem_terms(model: VarModel, rf: RiskFreeCurve, horizon: int):
    T = horizon
    k, n = model.k, model.n
    L = model.selector
    ones_k = np.ones(k)
    ones_n = L.transpose(ones_k)
    nu_t, phi_t = model.nu_tilde, model.phi_tilde
    A = np.zeros((T, k, n))
    d = np.zeros((T, k))
    for s in range(T):
        t = T - s
        if t == 1:
            sigma_T = CholeskyFactor(model.asset_covariance(T), name=f"Sigma({T})")
            A[s] = sigma_T.solve(model.phi)
            d[s] = sigma_T.solve(model.nu - rf.rate(T) * ones_k)
        elif t == 2:
            joint = model.factor(T - 1)
            sigma_T = CholeskyFactor(model.asset_covariance(T), name=f"Sigma({T})")
            r_T = rf.rate(T)
            A[s] = joint.solve(phi_t)[:k]
            first = joint.solve(nu_t - r_T * ones_n)[:k]
            second = model.phi.T[:k] @ sigma_T.solve(model.nu - r_T * ones_k + r_T * model.phi @ ones_n)
            d[s] = first - second
        else:
            near = model.factor(T - t + 1)
            far = model.factor(T - t + 2)
            r2, r3 = rf.rate(T - t + 2), rf.rate(T - t + 3)
            A[s] = near.solve(phi_t)[:k]
            first = near.solve(nu_t - r2 * ones_n)[:k]
            second = (phi_t.T @ far.solve(nu_t - r3 * ones_n + r2 * phi_t @ ones_n))[:k]
            d[s] = first - second
    return A, d


############ No predictors ############

def _no_predictor_terms(model: VarModel, rf: RiskFreeCurve, tau: int, horizon: int):
    """(A, d) of the no-predictor rule at decision tau; the model must have p = 0."""
    k = model.k
    ones = np.ones(k)
    t = tau + 1
    r1 = rf.rate(t)
    near = CholeskyFactor(model.asset_covariance(t), name=f"Sigma({t})")
    A = near.solve(model.phi)
    d = near.solve(model.nu - r1 * ones)
    if tau < horizon - 1:
        far = CholeskyFactor(model.asset_covariance(t + 1), name=f"Sigma({t + 1})")
        d = d - model.phi.T @ far.solve(model.nu - rf.rate(t + 1) * ones + r1 * model.phi @ ones)
    return A, d


def weights_no_predictors(model: VarModel, y_prev, rf, alpha: float, wealth: float, tau: int, horizon: int) -> np.ndarray:
    """
    w*_{T-t} = (Sigma^{-1}(T-t+1) mu_breve_{T-t+1}
               - Phi' Sigma^{-1}(T-t+2) (nu_breve_{T-t+2} + r_{f,T-t+1} Phi 1)) / (alpha W D)

    with tau = T - t. The second term vanishes at tau = T - 1.
    """
    if model.p != 0:
        raise UsageError(f"weights_no_predictors needs a model without predictors, got p={model.p}")
    if not 0 <= tau < horizon:
        raise UsageError(f"decision period must lie in 0..{horizon - 1}, got {tau}")
    wealth = _wealth(wealth)
    rf = RiskFreeCurve.coerce(rf, horizon)
    _check_inputs(model, rf, alpha, horizon)
    y = _state(y_prev, model.n)
    A, d = _no_predictor_terms(model, rf, tau, horizon)
    return (A @ y + d) / (alpha * wealth * rf.discount(tau))


############ i.i.d. returns ############

def weights_iid(mu, sigma, rf, alpha: float, wealth: float, tau: int, horizon: int) -> np.ndarray:
    """Tangency direction Sigma^{-1}(mu - r_{f,tau+1} 1) scaled by 1 / (alpha W D_tau)."""
    if not 0 <= tau < horizon:
        raise UsageError(f"decision period must lie in 0..{horizon - 1}, got {tau}")
    if alpha <= 0:
        raise UsageError(f"alpha must be positive, got {alpha}")
    wealth = _wealth(wealth)
    rf = RiskFreeCurve.coerce(rf, horizon)
    factor = CholeskyFactor(sigma, name="Sigma")
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (factor.dim,):
        raise DimensionMismatchError(f"mu has shape {mu.shape}, expected ({factor.dim},)")
    return factor.solve(mu - rf.rate(tau + 1)) / (alpha * wealth * rf.discount(tau))


def iid_moments(model: VarModel, source: str = "stationary"):
    """Mean and covariance of the asset returns as seen by an investor assuming i.i.d. returns."""
    k = model.k
    if source == "stationary" and not model.diagnostics.stationary:
        logger.warning("Phi~ is not stable; falling back to innovation moments for the i.i.d. rule")
        source = "innovation"
    if source == "stationary":
        return stationary_mean(model)[:k], stationary_covariance(model)[:k, :k]
    if source == "innovation":
        return model.nu.copy(), model.asset_covariance(1).copy()
    raise UsageError(f"unknown i.i.d. moment source {source!r}")


############ Rule construction ############

def build_rule(
    model: VarModel,
    rf,
    alpha: float,
    horizon: int,
    variant: str = "general",
    iid_source: str = "stationary",
) -> PortfolioRule:
    """Precompute the affine dollar rule for every decision period 0..T-1."""
    rf = RiskFreeCurve.coerce(rf, horizon)
    _check_inputs(model, rf, alpha, horizon)
    k, n = model.k, model.n
    D = np.array([rf.discount(tau) for tau in range(horizon)])
    value_terms = None

    if variant == "general":
        A, d, value_terms = _exact_terms(model, rf, horizon)
    elif variant == "theorem":
        A, d = _theorem_terms(model, rf, horizon)
    elif variant == "nopred":
        assets = model.asset_block() if model.p else model
        if model.p:
            logger.warning(f"no-predictor rule drops {model.p} predictor(s) and uses the asset block of the VAR")
        A = np.zeros((horizon, k, n))
        d = np.zeros((horizon, k))
        for tau in range(horizon):
            A_tau, d[tau] = _no_predictor_terms(assets, rf, tau, horizon)
            A[tau, :, :k] = A_tau
    elif variant == "iid":
        mu, sigma = iid_moments(model, iid_source)
        factor = CholeskyFactor(sigma, name="i.i.d. Sigma")
        A = np.zeros((horizon, k, n))
        d = np.array([factor.solve(mu - rf.rate(tau + 1)) for tau in range(horizon)])
    else:
        raise UsageError(f"unknown variant {variant!r}; choose one of {', '.join(VARIANTS)}")

    logger.debug(f"built {variant} rule: k={k}, n={n}, horizon={horizon}, alpha={alpha}")
    return PortfolioRule(variant, alpha, horizon, rf, A, d, D, value_terms=value_terms)


############ Export / import ############

def export_rule(rule: PortfolioRule) -> str:
    lines = [
        "# portfolio rule: dollars_tau = (A_tau y + d_tau) / (alpha D_tau)",
        f"variant {rule.variant}",
        f"alpha {format_float(rule.alpha)}",
        f"horizon {rule.horizon}",
        f"k {rule.k}",
        f"n {rule.n}",
        f"rf {format_row(rule.rf.rates)}",
    ]
    for tau in range(rule.horizon):
        lines.append(f"tau {tau}")
        lines.append(f"D {format_float(rule.D[tau])}")
        lines += [f"A {format_row(row)}" for row in rule.A[tau]]
        lines.append(f"d {format_row(rule.d[tau])}")
    return "\n".join(lines) + "\n"


def import_rule(text: str) -> PortfolioRule:
    header = {}
    blocks = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "tau":
            blocks.append({"A": []})
        elif key in ("D", "A", "d"):
            if not blocks:
                raise DataError("rule table: block entry before the first 'tau' line")
            values = [float(tok) for tok in rest.split()]
            if key == "A":
                blocks[-1]["A"].append(values)
            else:
                blocks[-1][key] = values
        else:
            header[key] = rest
    try:
        horizon = int(header["horizon"])
        k, n = int(header["k"]), int(header["n"])
        rf = RiskFreeCurve([float(tok) for tok in header["rf"].split()])
        A = np.array([b["A"] for b in blocks], dtype=float).reshape(horizon, k, n)
        d = np.array([b["d"] for b in blocks], dtype=float).reshape(horizon, k)
        D = np.array([b["D"][0] for b in blocks], dtype=float)
        return PortfolioRule(header["variant"], float(header["alpha"]), horizon, rf, A, d, D)
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed rule table: {exc}") from exc
