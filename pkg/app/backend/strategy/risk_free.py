from typing import Sequence, Union

import numpy as np

from app.backend.utils.errors import DataError, UsageError


class RiskFreeCurve:
    """Per-period simple rates r_{f,t} for t = 1..T and gross returns R_{f,t} = 1 + r_{f,t}."""

    def __init__(self, rates: Sequence[float]):
        rates = np.array(rates, dtype=float).reshape(-1)
        if rates.size == 0:
            raise UsageError("risk-free curve needs at least one period")
        if not np.all(np.isfinite(rates)) or np.any(1.0 + rates <= 0.0):
            raise UsageError("risk-free gross returns 1 + r must be finite and positive")
        rates.flags.writeable = False
        self._rates = rates

    @classmethod
    def constant(cls, rate: float, horizon: int) -> "RiskFreeCurve":
        return cls(np.full(int(horizon), float(rate)))

    @classmethod
    def from_file(cls, path, horizon: int) -> "RiskFreeCurve":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                values = [float(tok) for line in fh for tok in line.replace(",", " ").split() if not line.startswith("#")]
        except OSError as exc:
            raise DataError(f"cannot read risk-free file {path}: {exc.strerror}") from exc
        except ValueError as exc:
            raise DataError(f"{path}: risk-free rates must be numeric") from exc
        if len(values) < horizon:
            raise DataError(f"{path}: {len(values)} rates given, horizon {horizon} needs {horizon}")
        return cls(values[:horizon])

    @classmethod
    def coerce(cls, spec: Union["RiskFreeCurve", float, Sequence[float]], horizon: int) -> "RiskFreeCurve":
        if isinstance(spec, RiskFreeCurve):
            if spec.horizon < horizon:
                raise UsageError(f"risk-free curve covers {spec.horizon} periods, horizon {horizon} requested")
            return spec if spec.horizon == horizon else cls(spec.rates[:horizon])
        if np.ndim(spec) == 0:
            return cls.constant(float(spec), horizon)
        return cls.coerce(cls(spec), horizon)

    def __repr__(self) -> str:
        return f"RiskFreeCurve(horizon={self.horizon})"

    @property
    def horizon(self) -> int:
        return self._rates.size

    @property
    def rates(self) -> np.ndarray:
        return self._rates

    def rate(self, t: int) -> float:
        if not 1 <= t <= self.horizon:
            raise UsageError(f"r_f({t}) is undefined; the curve covers t = 1..{self.horizon}")
        return float(self._rates[t - 1])

    def gross(self, t: int) -> float:
        return 1.0 + self.rate(t)

    def compounding(self, start: int, stop: int) -> float:
        """prod_{i=start}^{stop} R_{f,i}; the empty product is 1."""
        if stop < start:
            return 1.0
        return float(np.prod(1.0 + self._rates[start - 1 : stop]))

    def discount(self, tau: int) -> float:
        """D_tau = prod_{i=tau+2}^{T} R_{f,i} for decision period tau."""
        return self.compounding(tau + 2, self.horizon)

    def growth(self) -> float:
        """Wealth multiplier of a pure cash position over the whole horizon."""
        return self.compounding(1, self.horizon)
