"""Empirical distribution functions of terminal wealth and their comparison."""

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from app.backend.utils.errors import NumericalError, UsageError
from app.backend.utils.numerics import format_float

GRID_POINTS = 512
CENTRAL_BAND = (0.375, 0.625)


class Ecdf:
    """Right-continuous step function F(x) = #{samples <= x} / n."""

    def __init__(self, samples):
        samples = np.sort(np.asarray(samples, dtype=float).reshape(-1))
        if samples.size == 0:
            raise UsageError("ECDF of an empty sample")
        if not np.all(np.isfinite(samples)):
            raise NumericalError(f"{int(np.sum(~np.isfinite(samples)))} non-finite samples; drop flagged repetitions first")
        samples.flags.writeable = False
        self.samples = samples

    def __repr__(self) -> str:
        return f"Ecdf(n={self.n}, min={self.samples[0]!r}, max={self.samples[-1]!r})"

    @property
    def n(self) -> int:
        return self.samples.size

    def __call__(self, x):
        return np.searchsorted(self.samples, x, side="right") / self.n

    def below(self, x):
        """P(W < x), the left limit of F at x."""
        return np.searchsorted(self.samples, x, side="left") / self.n

    def quantile(self, q: float) -> float:
        """Smallest sample x with F(x) >= q."""
        if not 0.0 <= q <= 1.0:
            raise UsageError(f"quantile level must lie in [0, 1], got {q}")
        index = max(int(math.ceil(q * self.n)) - 1, 0)
        return float(self.samples[index])

    def interval_probability(self, lo: float, hi: float) -> float:
        """P(lo <= W <= hi)."""
        if hi < lo:
            return 0.0
        count = np.searchsorted(self.samples, hi, side="right") - np.searchsorted(self.samples, lo, side="left")
        return float(count) / self.n

    def grid(self, points: int = GRID_POINTS) -> Tuple[np.ndarray, np.ndarray]:
        x = np.linspace(self.samples[0], self.samples[-1], points)
        return x, self(x)

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def median(self) -> float:
        return self.quantile(0.5)


def ecdf(samples) -> Ecdf:
    return Ecdf(samples)


def central_band(curve: Ecdf, levels: Tuple[float, float] = CENTRAL_BAND) -> Tuple[float, float]:
    """Wealth interval between two quantiles of ``curve``, by default its central 25%."""
    return curve.quantile(levels[0]), curve.quantile(levels[1])


class ProbeResult(BaseModel):
    lo: float
    hi: float
    probabilities: Dict[str, float]


class ComparisonReport(BaseModel):
    labels: List[str]
    probes: List[ProbeResult] = Field(default_factory=list)
    below_fraction: float = Field(description="share of the merged support where F_a < F_b")
    at_or_below_fraction: float = Field(description="share of the merged support where F_a <= F_b")
    reverse_below_fraction: float = Field(description="share of the merged support where F_b < F_a")
    upper_quantile: float
    at_or_below_above_quantile: float = Field(description="F_a <= F_b on the merged support above the quantile")
    loss_threshold: float
    loss_probability: Dict[str, float]
    bankruptcy_probability: Dict[str, float]
    medians: Dict[str, float]
    means: Dict[str, float]
    samples: Dict[str, int]
    common_random_numbers: bool = False


def compare(
    a: Ecdf,
    b: Ecdf,
    probes: Sequence[Tuple[float, float]] = (),
    loss_threshold: float = 1.0,
    labels: Tuple[str, str] = ("a", "b"),
    upper_quantile: float = 0.5,
    common_random_numbers: bool = False,
) -> ComparisonReport:
    """
    Compare two terminal-wealth ECDFs. ``a`` dominates where its ECDF lies
    below; loss is W_T < ``loss_threshold`` (W_0 times the cash growth) and
    bankruptcy is W_T <= 0.
    """
    la, lb = labels
    support = np.union1d(a.samples, b.samples)
    fa, fb = a(support), b(support)
    cut = np.quantile(support, upper_quantile) if upper_quantile > 0 else -np.inf
    upper = support >= cut
    return ComparisonReport(
        labels=[la, lb],
        probes=[
            ProbeResult(lo=lo, hi=hi, probabilities={la: a.interval_probability(lo, hi), lb: b.interval_probability(lo, hi)})
            for lo, hi in probes
        ],
        below_fraction=float(np.mean(fa < fb)),
        at_or_below_fraction=float(np.mean(fa <= fb)),
        reverse_below_fraction=float(np.mean(fb < fa)),
        upper_quantile=upper_quantile,
        at_or_below_above_quantile=float(np.mean(fa[upper] <= fb[upper])),
        loss_threshold=float(loss_threshold),
        loss_probability={la: float(a.below(loss_threshold)), lb: float(b.below(loss_threshold))},
        bankruptcy_probability={la: float(a(0.0)), lb: float(b(0.0))},
        medians={la: a.median, lb: b.median},
        means={la: a.mean, lb: b.mean},
        samples={la: a.n, lb: b.n},
        common_random_numbers=common_random_numbers,
    )


def ecdf_frame(curves: Dict[str, Ecdf], points: int = GRID_POINTS, exact: bool = False) -> pd.DataFrame:
    """Long table (strategy, x, F) on the plotting grid, or on the sample points with ``exact``."""
    frames = []
    for name, curve in curves.items():
        x = curve.samples if exact else curve.grid(points)[0]
        frames.append(pd.DataFrame({"strategy": name, "x": x, "F": curve(x)}))
    return pd.concat(frames, ignore_index=True)


def format_ecdf_csv(curves: Dict[str, Ecdf], points: int = GRID_POINTS, exact: bool = False) -> str:
    return ecdf_frame(curves, points, exact).to_csv(index=False, float_format=format_float, lineterminator="\n")


def format_samples_csv(terminal: Dict[str, np.ndarray], flagged: Optional[Dict[str, np.ndarray]] = None) -> str:
    frame = pd.DataFrame({name: np.asarray(values) for name, values in terminal.items()})
    frame.index.name = "rep"
    if flagged:
        for name, mask in flagged.items():
            frame[f"{name}_flagged"] = np.asarray(mask, dtype=int)
    return frame.to_csv(float_format=format_float, lineterminator="\n")
