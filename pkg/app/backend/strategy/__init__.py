from .risk_free import RiskFreeCurve
from .rules import (
    VARIANTS,
    PortfolioRule,
    build_rule,
    evaluate_rule,
    export_rule,
    iid_moments,
    import_rule,
    weights_iid,
    weights_last,
    weights_no_predictors,
)

__all__ = [
    'RiskFreeCurve',
    'VARIANTS',
    'PortfolioRule',
    'build_rule',
    'evaluate_rule',
    'export_rule',
    'iid_moments',
    'import_rule',
    'weights_iid',
    'weights_last',
    'weights_no_predictors',
]
