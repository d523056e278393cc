"""Plain-text reports rendered from the jinja2 templates under Data/templates."""

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from app.backend.estimation.var_fit import FitReport
from app.backend.sim.ecdf import ComparisonReport
from app.backend.strategy.rules import PortfolioRule, evaluate_rule
from app.backend.utils.numerics import format_float

TEMPLATES_DIR = Path(__file__).resolve().parent.parent / "Data" / "templates"

_env = Environment(
    loader=FileSystemLoader(str(TEMPLATES_DIR)),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
)
_env.filters["num"] = format_float


def _numbers(values) -> List[str]:
    return [format_float(v) for v in np.ravel(values)]


def render_fit_report(report: FitReport) -> str:
    labels = report.labels or [f"y{i + 1}" for i in range(report.k + report.p)]
    rows = [
        {
            "label": label,
            "nu": report.nu_tilde[i],
            "nu_se": report.nu_std_errors[i],
            "r2": report.r_squared[i],
            "phi": list(zip(report.phi_tilde[i], report.phi_std_errors[i])),
            "sigma": _numbers(report.residual_cov[i]),
        }
        for i, label in enumerate(labels)
    ]
    return _env.get_template("fit_report.txt.j2").render(
        n_obs=report.residuals.shape[0] + 1, k=report.k, p=report.p, dof=report.dof, rows=rows
    )


def render_rule_table(rule: PortfolioRule, y0, w0: float, labels: Optional[Sequence[str]] = None) -> str:
    """One row per decision: discount D_tau, dollars and weights at the state ``y0``."""
    labels = list(labels)[: rule.k] if labels else [f"x{i + 1}" for i in range(rule.k)]
    rows = []
    for tau in range(rule.horizon):
        weights, dollars = evaluate_rule(rule, tau, y0, w0)
        rows.append({"tau": tau, "discount": rule.D[tau], "dollars": _numbers(dollars), "weights": _numbers(weights)})
    return _env.get_template("rule_table.txt.j2").render(
        variant=rule.variant, horizon=rule.horizon, alpha=rule.alpha, w0=w0, y0=_numbers(y0), labels=labels, rows=rows
    )


def render_compare_report(
    report: ComparisonReport, horizon: int, alpha: float, reps: int, seed: int, flagged: Dict[str, int]
) -> str:
    return _env.get_template("compare_report.txt.j2").render(
        report=report, labels=report.labels, horizon=horizon, alpha=alpha, reps=reps, seed=seed, flagged=flagged
    )


def render_verify_report(**context) -> str:
    return _env.get_template("verify_report.txt.j2").render(**context)
