"""Tensor Gauss-Hermite rules for expectations under a multivariate normal."""

import itertools
import math
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss

from app.backend.utils.errors import UsageError
from app.backend.utils.numerics import CholeskyFactor

MIN_NODES = 2


@lru_cache(maxsize=32)
def _tensor_rule(nodes: int, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = hermgauss(nodes)
    z = np.array(list(itertools.product(x, repeat=dim)))
    log_w = np.array(list(itertools.product(np.log(w), repeat=dim))).sum(axis=1) - 0.5 * dim * math.log(math.pi)
    z.flags.writeable = False
    log_w.flags.writeable = False
    return z, log_w


def gaussian_rule(factor: CholeskyFactor, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Offsets and log-weights of the ``nodes``^d tensor rule for N(0, C C').

    E[f(m + e)] ~= sum_j exp(log_w_j) f(m + offsets_j); weights sum to one.
    """
    if nodes < MIN_NODES:
        raise UsageError(f"quadrature needs at least {MIN_NODES} nodes, got {nodes}")
    z, log_w = _tensor_rule(int(nodes), factor.dim)
    return math.sqrt(2.0) * z @ factor.lower.T, log_w


def gauss_hermite_expectation(func: Callable[[np.ndarray], np.ndarray], mean, cov, nodes: int = 40) -> float:
    """E[func(y)] for y ~ N(mean, cov); ``func`` maps an (N, d) array of points to N values."""
    mean = np.asarray(mean, dtype=float)
    factor = CholeskyFactor(cov, name="cov")
    offsets, log_w = gaussian_rule(factor, nodes)
    values = np.asarray(func(mean + offsets), dtype=float)
    return float(np.sum(np.exp(log_w) * values))
