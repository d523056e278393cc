"""Least-squares VAR(1) fit of a joint return/predictor series."""

import io
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Literal, Optional

import numpy as np
import pandas as pd
from scipy import linalg

from app.backend.model.var_model import VarModel, format_model
from app.backend.utils.errors import DataError, SeriesFormatError, SingularRegressorError, UsageError
from app.backend.utils.numerics import format_row

logger = logging.getLogger(__name__)

DofConvention = Literal["regressors", "plain"]
SINGULAR_TOL = 1e-10
_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$|^[+-]?(nan|inf)$", re.IGNORECASE)


@dataclass(frozen=True)
class ReturnSeries:
    observations: np.ndarray
    k: int
    p: int = 0
    labels: Optional[List[str]] = None

    def __post_init__(self):
        obs = np.array(self.observations, dtype=float)
        if obs.ndim != 2 or obs.shape[1] != self.k + self.p:
            raise SeriesFormatError(f"observations must have k+p = {self.k + self.p} columns, got shape {obs.shape}")
        obs.flags.writeable = False
        object.__setattr__(self, "observations", obs)

    @property
    def n(self) -> int:
        return self.observations.shape[0]


def _is_number(token: str) -> bool:
    return bool(_NUMBER.match(token.strip()))


def load_series(path, k: int, p: int = 0) -> ReturnSeries:
    """
    Read a comma- or whitespace-delimited file of k+p columns.

    An optional header row is kept as labels and an optional leading
    non-numeric column (dates) is dropped. Rows stay in file order.
    """
    if k < 1 or p < 0:
        raise UsageError(f"need k >= 1 and p >= 0, got k={k}, p={p}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read series file {path}: {exc.strerror}") from exc

    lines = [(no, line) for no, line in enumerate(text.splitlines(), start=1) if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise SeriesFormatError(f"{path}: file is empty")
    comma = "," in lines[0][1]

    def split(line: str) -> List[str]:
        return [tok.strip() for tok in line.split(",")] if comma else line.split()

    width = len(split(lines[0][1]))
    for no, line in lines:
        if len(split(line)) != width:
            raise SeriesFormatError(f"{path}: line {no} has {len(split(line))} fields, expected {width}")

    dim = k + p
    if width not in (dim, dim + 1):
        raise SeriesFormatError(f"{path}: {width} columns found, expected k+p = {dim} (plus an optional date column)")
    first = split(lines[0][1])
    has_header = not all(_is_number(tok) for tok in first[width - dim :])
    data = split(lines[1][1] if has_header and len(lines) > 1 else lines[0][1])
    has_date = width == dim + 1 and not _is_number(data[0])
    if width == dim + 1 and not has_date:
        raise SeriesFormatError(f"{path}: {width} numeric columns found, expected k+p = {dim}; a leading date column must be non-numeric")

    frame = pd.read_csv(
        io.StringIO("\n".join(line for _, line in lines)),
        sep="," if comma else r"\s+",
        header=0 if has_header else None,
        dtype=str,
        skipinitialspace=True,
    )
    if has_date:
        frame = frame.iloc[:, 1:]
    labels = [str(c).strip() for c in frame.columns] if has_header else None
    numeric = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = numeric.isna().to_numpy() & frame.notna().to_numpy()
    bad |= frame.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        line_no = lines[row + (1 if has_header else 0)][0]
        raise SeriesFormatError(f"{path}: line {line_no}, column {col + 1 + int(has_date)}: non-numeric value {frame.iat[row, col]!r}")

    series = ReturnSeries(numeric.to_numpy(dtype=float), k, p, labels)
    if series.n < dim + 2:
        raise SeriesFormatError(f"{path}: {series.n} observations, need at least k+p+2 = {dim + 2}")
    logger.info(f"loaded {series.n} observations of {dim} series from {path}")
    return series


@dataclass
class FitReport:
    nu_tilde: np.ndarray
    phi_tilde: np.ndarray
    residual_cov: np.ndarray
    r_squared: np.ndarray
    residuals: np.ndarray
    std_errors: np.ndarray
    k: int
    p: int
    dof: int
    labels: Optional[List[str]] = None
    regressors: np.ndarray = field(default=None, repr=False)

    @cached_property
    def model(self) -> VarModel:
        """Fitted VarModel with Sigma~ = Sigma_eps; raises if Sigma_eps is not positive definite."""
        return VarModel(self.nu_tilde, self.phi_tilde, self.residual_cov, self.k, self.p, labels=self.labels)

    @property
    def nu_std_errors(self) -> np.ndarray:
        return self.std_errors[0]

    @property
    def phi_std_errors(self) -> np.ndarray:
        return self.std_errors[1:].T


def fit_var1(series: ReturnSeries, dof: DofConvention = "regressors") -> FitReport:
    """Equation-by-equation OLS of Y_t on (1, Y_{t-1}) through a QR decomposition of the regressors."""
    n_obs, dim = series.n, series.k + series.p
    if n_obs < dim + 2:
        raise SeriesFormatError(f"{n_obs} observations, need at least k+p+2 = {dim + 2}")
    data = series.observations
    X = np.hstack([np.ones((n_obs - 1, 1)), data[:-1]])
    Y = data[1:]

    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= SINGULAR_TOL * max(diag.max(), 1.0):
        raise SingularRegressorError("regressor matrix (1, Y_{t-1}) is rank deficient; constant or collinear series")
    coef = linalg.solve_triangular(R, Q.T @ Y)
    residuals = Y - X @ coef

    if dof == "regressors":
        denom = n_obs - 1 - (dim + 1)
    elif dof == "plain":
        denom = n_obs - 1
    else:
        raise UsageError(f"unknown degrees-of-freedom convention {dof!r}")
    if denom <= 0:
        raise SeriesFormatError(f"{n_obs} observations leave no degrees of freedom for the residual covariance")
    sigma = residuals.T @ residuals / denom
    sigma = 0.5 * (sigma + sigma.T)

    centered = Y - Y.mean(axis=0)
    sst = np.sum(centered**2, axis=0)
    ssr = np.sum(residuals**2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(sst > 0, 1.0 - ssr / sst, np.nan)

    r_inv = linalg.solve_triangular(R, np.eye(R.shape[0]))
    xtx_inv_diag = np.sum(r_inv**2, axis=1)
    std_errors = np.sqrt(np.outer(xtx_inv_diag, np.clip(np.diag(sigma), 0.0, None)))

    logger.info(f"fitted VAR(1) on {n_obs} observations (k={series.k}, p={series.p}, dof={denom})")
    return FitReport(
        nu_tilde=coef[0],
        phi_tilde=coef[1:].T.copy(),
        residual_cov=sigma,
        r_squared=r2,
        residuals=residuals,
        std_errors=std_errors,
        k=series.k,
        p=series.p,
        dof=denom,
        labels=series.labels,
        regressors=X,
    )


def format_fit_report(report: FitReport) -> str:
    """Model file of the fit followed by '#' lines with the residual covariance and R^2 per equation."""
    labels = report.labels or [f"y{i + 1}" for i in range(report.k + report.p)]
    comments = [f"fit: k={report.k} p={report.p} dof={report.dof}", "residual covariance"]
    comments += [format_row(row) for row in report.residual_cov]
    comments += [f"R2 {label} {r2!r}" for label, r2 in zip(labels, map(float, report.r_squared))]
    return format_model(report.model, comments=comments)
