"""Small numerical helpers: PD checks, cached factorizations, float formatting."""

import numpy as np
from scipy import linalg

from .errors import NotPositiveDefiniteError

PD_TOL = 1e-10


def format_float(x) -> str:
    """Shortest repr that round-trips to the same double."""
    return repr(float(x))


def format_row(values) -> str:
    return " ".join(format_float(v) for v in np.ravel(values))


def pd_margin(matrix: np.ndarray) -> float:
    """Smallest eigenvalue relative to the largest diagonal entry."""
    matrix = np.asarray(matrix, dtype=float)
    scale = float(np.max(np.abs(np.diag(matrix)))) if matrix.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.linalg.eigvalsh(matrix).min()) / scale


def is_symmetric(matrix: np.ndarray, rtol: float = 1e-12) -> bool:
    matrix = np.asarray(matrix, dtype=float)
    scale = max(float(np.max(np.abs(matrix))), 1e-300)
    return bool(np.max(np.abs(matrix - matrix.T)) <= rtol * scale)


def check_positive_definite(matrix: np.ndarray, name: str = "matrix", tol: float = PD_TOL) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NotPositiveDefiniteError(f"{name} must be square, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise NotPositiveDefiniteError(f"{name} has non-finite entries")
    if not is_symmetric(matrix):
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    margin = pd_margin(matrix)
    if margin <= tol:
        raise NotPositiveDefiniteError(
            f"{name} is not positive definite (smallest eigenvalue / max diagonal = {margin:.3e}, tol {tol:.0e})"
        )
    return matrix


class CholeskyFactor:
    """Lower Cholesky factor of an SPD matrix with solve helpers."""

    def __init__(self, matrix: np.ndarray, name: str = "matrix"):
        self.matrix = check_positive_definite(matrix, name)
        try:
            self._cho = linalg.cho_factor(self.matrix, lower=True)
        except linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(f"{name}: Cholesky factorization failed ({exc})") from exc
        self.lower = np.tril(self._cho[0])
        self.lower.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self._cho, rhs)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))


def spectral_radius(matrix: np.ndarray) -> float:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))
