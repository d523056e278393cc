"""
Joint VAR(1) process of asset returns and predictor variables.

    Y_t = nu~ + Phi~ Y_{t-1} + eps~_t,   eps~_t ~ N(0, Sigma~(t))

with Y_t = (X_t', z_t')', k assets and p predictors. Returns are read off the
state by the selector L = [I_k O_{k,p}].
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy import linalg

from app.backend.utils.errors import DataError, DimensionMismatchError, NotPositiveDefiniteError, UsageError
from app.backend.utils.numerics import PD_TOL, CholeskyFactor, format_row, is_symmetric, pd_margin, spectral_radius

logger = logging.getLogger(__name__)


class Selector:
    """The block matrix L = [I_k O_{k,p}], stored as (k, p) only."""

    def __init__(self, k: int, p: int):
        self.k = int(k)
        self.p = int(p)

    @property
    def n(self) -> int:
        return self.k + self.p

    def apply(self, v: np.ndarray) -> np.ndarray:
        """L v: first k coordinates along the last axis."""
        return np.asarray(v)[..., : self.k]

    def transpose(self, x: np.ndarray) -> np.ndarray:
        """L' x: zero-pad a k-vector (last axis) to length k+p."""
        x = np.asarray(x, dtype=float)
        pad = [(0, 0)] * (x.ndim - 1) + [(0, self.p)]
        return np.pad(x, pad)

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack([np.eye(self.k), np.zeros((self.k, self.p))])


@dataclass(frozen=True)
class StateVector:
    y: np.ndarray
    t: int = 0

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        y.flags.writeable = False
        object.__setattr__(self, "y", y)


class ModelDiagnostics(BaseModel):
    k: int
    p: int
    dimensions_consistent: bool
    dimension_issues: List[str] = Field(default_factory=list)
    pd_margins: List[float] = Field(default_factory=list)
    pd_ok: bool
    spectral_radius: Optional[float] = None
    stationary: Optional[bool] = None
    warnings: List[str] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.dimensions_consistent and self.pd_ok


def _as_sigma_table(sigma_tilde) -> np.ndarray:
    table = np.asarray(sigma_tilde, dtype=float)
    if table.ndim == 2:
        table = table[None, :, :]
    return table


def validate_parameters(nu_tilde, phi_tilde, sigma_tilde, k: int, p: int, pd_tol: float = PD_TOL) -> ModelDiagnostics:
    """Diagnostics for raw parameters; never raises on bad values."""
    issues: List[str] = []
    warnings: List[str] = []
    n = k + p
    nu = np.asarray(nu_tilde, dtype=float)
    phi = np.asarray(phi_tilde, dtype=float)
    table = _as_sigma_table(sigma_tilde)

    if k < 1:
        issues.append(f"k must be >= 1, got {k}")
    if p < 0:
        issues.append(f"p must be >= 0, got {p}")
    if nu.shape != (n,):
        issues.append(f"nu_tilde has shape {nu.shape}, expected ({n},)")
    if phi.shape != (n, n):
        issues.append(f"phi_tilde has shape {phi.shape}, expected ({n}, {n})")
    if table.ndim != 3 or table.shape[1:] != (n, n):
        issues.append(f"sigma_tilde has shape {table.shape}, expected ({n}, {n}) or (m, {n}, {n})")
    consistent = not issues
    if consistent and not (np.all(np.isfinite(nu)) and np.all(np.isfinite(phi)) and np.all(np.isfinite(table))):
        issues.append("non-finite parameter entries")
        consistent = False

    margins: List[float] = []
    pd_ok = False
    if consistent:
        pd_ok = True
        for t, sigma in enumerate(table, start=1):
            if not is_symmetric(sigma):
                warnings.append(f"Sigma~({t}) is not symmetric")
                pd_ok = False
                margins.append(float("nan"))
                continue
            margin = pd_margin(sigma)
            margins.append(margin)
            if margin <= pd_tol:
                warnings.append(f"Sigma~({t}) fails positive definiteness (margin {margin:.3e})")
                pd_ok = False

    rho = None
    stationary = None
    if consistent:
        rho = spectral_radius(phi)
        stationary = rho < 1.0
        if not stationary:
            warnings.append(f"spectral radius of Phi~ is {rho:.4f} >= 1 (process is not stationary)")

    return ModelDiagnostics(
        k=k,
        p=p,
        dimensions_consistent=consistent,
        dimension_issues=issues,
        pd_margins=margins,
        pd_ok=pd_ok,
        spectral_radius=rho,
        stationary=stationary,
        warnings=warnings,
    )


class VarModel:
    """
    Immutable VAR(1) parameters (nu~, Phi~, Sigma~(t)).

    ``sigma_tilde`` is either one (k+p)x(k+p) matrix used for every period or a
    table of shape (m, k+p, k+p) holding Sigma~(1), ..., Sigma~(m).
    """

    def __init__(self, nu_tilde, phi_tilde, sigma_tilde, k: int, p: int = 0, labels: Optional[Sequence[str]] = None):
        diagnostics = validate_parameters(nu_tilde, phi_tilde, sigma_tilde, int(k), int(p))
        if not diagnostics.dimensions_consistent:
            raise DimensionMismatchError("; ".join(diagnostics.dimension_issues))
        if not diagnostics.pd_ok:
            raise NotPositiveDefiniteError("; ".join(w for w in diagnostics.warnings if "Sigma" in w))

        self.k = int(k)
        self.p = int(p)
        self.selector = Selector(self.k, self.p)
        self._nu = np.array(nu_tilde, dtype=float)
        self._phi = np.array(phi_tilde, dtype=float)
        self._sigma = _as_sigma_table(sigma_tilde).copy()
        for arr in (self._nu, self._phi, self._sigma):
            arr.flags.writeable = False
        self._factors = [CholeskyFactor(s, name=f"Sigma~({t})") for t, s in enumerate(self._sigma, start=1)]
        self.labels = list(labels) if labels is not None else None
        self.diagnostics = diagnostics
        for warning in diagnostics.warnings:
            logger.warning(warning)

    def __repr__(self) -> str:
        kind = "constant" if self.is_constant else f"{self.periods} periods"
        return f"VarModel(k={self.k}, p={self.p}, sigma={kind})"

    @property
    def n(self) -> int:
        return self.k + self.p

    @property
    def nu_tilde(self) -> np.ndarray:
        return self._nu

    @property
    def phi_tilde(self) -> np.ndarray:
        return self._phi

    @property
    def nu(self) -> np.ndarray:
        return self._nu[: self.k]

    @property
    def phi(self) -> np.ndarray:
        return self._phi[: self.k]

    @property
    def is_constant(self) -> bool:
        return self._sigma.shape[0] == 1

    @property
    def periods(self) -> Optional[int]:
        """Number of tabulated periods, None when Sigma~ is constant."""
        return None if self.is_constant else self._sigma.shape[0]

    @property
    def sigma_table(self) -> np.ndarray:
        return self._sigma

    def _index(self, t: int) -> int:
        if self.is_constant:
            return 0
        if not 1 <= t <= self._sigma.shape[0]:
            raise UsageError(f"Sigma~({t}) is undefined; the table covers t = 1..{self._sigma.shape[0]}")
        return t - 1

    def sigma(self, t: int) -> np.ndarray:
        return self._sigma[self._index(t)]

    def factor(self, t: int) -> CholeskyFactor:
        return self._factors[self._index(t)]

    def asset_covariance(self, t: int) -> np.ndarray:
        return self.sigma(t)[: self.k, : self.k]

    def supports_horizon(self, horizon: int) -> bool:
        return self.is_constant or horizon <= self._sigma.shape[0]

    def asset_block(self) -> "VarModel":
        """VAR(1) on the asset returns alone (predictor rows and columns dropped)."""
        k = self.k
        return VarModel(self._nu[:k], self._phi[:k, :k], self._sigma[:, :k, :k] if not self.is_constant else self._sigma[0, :k, :k], k, 0, labels=self.labels[:k] if self.labels else None)


def _state(y, n: int) -> np.ndarray:
    y = y.y if isinstance(y, StateVector) else np.asarray(y, dtype=float)
    if y.shape[-1] != n:
        raise DimensionMismatchError(f"state has length {y.shape[-1]}, expected {n}")
    return y


def conditional_mean(model: VarModel, y_prev) -> np.ndarray:
    """mu~_t = nu~ + Phi~ Y_{t-1}; works on a single state or a stack of states."""
    y = _state(y_prev, model.n)
    return model.nu_tilde + y @ model.phi_tilde.T


def asset_moments(model: VarModel, y_prev, t: int, rf=0.0):
    """
    Conditional moments of X_t given F_{t-1}.

    Returns (mean, cov, excess_mean) with mean = L mu~_t, cov = L Sigma~(t) L'
    and excess_mean = mean - r_{f,t} 1.
    """
    mean = model.selector.apply(conditional_mean(model, y_prev))
    cov = model.asset_covariance(t)
    if pd_margin(cov) <= PD_TOL:
        raise NotPositiveDefiniteError(f"asset block of Sigma~({t}) is not positive definite")
    rate = rf.rate(t) if hasattr(rf, "rate") else float(rf)
    return mean, cov, mean - rate


def simulate_paths(model: VarModel, y0, horizon: int, rng: np.random.Generator, n_paths: int) -> np.ndarray:
    """
    Exact simulation of ``n_paths`` paths; returns an array (n_paths, horizon+1, k+p)
    whose slice [:, 0] is the initial state.
    """
    if horizon < 1:
        raise UsageError(f"horizon must be >= 1, got {horizon}")
    if not model.supports_horizon(horizon):
        raise UsageError(f"Sigma~ table covers {model.periods} periods, horizon {horizon} requested")
    y0 = _state(y0, model.n)
    z = rng.standard_normal((horizon, n_paths, model.n))
    paths = np.empty((n_paths, horizon + 1, model.n))
    paths[:, 0] = y0
    for t in range(1, horizon + 1):
        eps = z[t - 1] @ model.factor(t).lower.T
        paths[:, t] = model.nu_tilde + paths[:, t - 1] @ model.phi_tilde.T + eps
    return paths


def simulate_path(model: VarModel, y0, horizon: int, rng_seed: int) -> List[StateVector]:
    """One path Y_0, Y_1, ..., Y_horizon; deterministic given the seed."""
    rng = np.random.default_rng(rng_seed)
    path = simulate_paths(model, y0, horizon, rng, 1)[0]
    return [StateVector(y, t) for t, y in enumerate(path)]


def validate(model) -> ModelDiagnostics:
    if isinstance(model, VarModel):
        return model.diagnostics
    nu, phi, sigma, k, p = model
    return validate_parameters(nu, phi, sigma, k, p)


def stationary_mean(model: VarModel) -> np.ndarray:
    """(I - Phi~)^{-1} nu~; requires spectral radius < 1."""
    if not model.diagnostics.stationary:
        raise UsageError("stationary mean undefined: spectral radius of Phi~ is >= 1")
    return np.linalg.solve(np.eye(model.n) - model.phi_tilde, model.nu_tilde)


def stationary_covariance(model: VarModel) -> np.ndarray:
    """Gamma solving Gamma = Phi~ Gamma Phi~' + Sigma~(1)."""
    if not model.diagnostics.stationary:
        raise UsageError("stationary covariance undefined: spectral radius of Phi~ is >= 1")
    gamma = linalg.solve_discrete_lyapunov(model.phi_tilde, model.sigma(1))
    return 0.5 * (gamma + gamma.T)


def default_initial_state(model: VarModel) -> np.ndarray:
    if model.diagnostics.stationary:
        return stationary_mean(model)
    logger.warning("Phi~ is not stable; using Y_0 = 0")
    return np.zeros(model.n)


############ Model files ############

def format_model(model: VarModel, comments: Iterable[str] = ()) -> str:
    lines = [f"{model.k} {model.p}", format_row(model.nu_tilde)]
    lines += [format_row(row) for row in model.phi_tilde]
    for sigma in model.sigma_table:
        lines += [format_row(row) for row in sigma]
    lines += [f"# {c}" for c in comments]
    return "\n".join(lines) + "\n"


def parse_model(text: str, source: str = "<string>") -> VarModel:
    rows = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            rows.append([float(tok) for tok in stripped.split()])
        except ValueError as exc:
            raise DataError(f"{source}: non-numeric entry in line {stripped[:40]!r}") from exc
    if not rows or len(rows[0]) != 2:
        raise DataError(f"{source}: first line must be 'k p'")
    k, p = int(rows[0][0]), int(rows[0][1])
    n = k + p
    body = rows[1:]
    if len(body) < 1 + 2 * n or (len(body) - 1 - n) % n != 0:
        raise DataError(f"{source}: expected nu~ (1 line), Phi~ ({n} lines) and Sigma~ blocks of {n} lines")
    if any(len(r) != n for r in body):
        raise DataError(f"{source}: every parameter line must hold {n} numbers")
    nu = np.array(body[0])
    phi = np.array(body[1 : 1 + n])
    sigma = np.array(body[1 + n :]).reshape(-1, n, n)
    return VarModel(nu, phi, sigma[0] if sigma.shape[0] == 1 else sigma, k, p)


def load_model(path) -> VarModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc.strerror}") from exc
    return parse_model(text, source=str(path))
