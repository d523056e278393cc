from .var_model import (
    ModelDiagnostics,
    Selector,
    StateVector,
    VarModel,
    asset_moments,
    conditional_mean,
    default_initial_state,
    format_model,
    load_model,
    parse_model,
    simulate_path,
    simulate_paths,
    stationary_covariance,
    stationary_mean,
    validate,
    validate_parameters,
)
from .reference import MARKET_LABELS, WEEKLY_MODEL_PATH, weekly_markets_model

__all__ = [
    'ModelDiagnostics',
    'Selector',
    'StateVector',
    'VarModel',
    'asset_moments',
    'conditional_mean',
    'default_initial_state',
    'format_model',
    'load_model',
    'parse_model',
    'simulate_path',
    'simulate_paths',
    'stationary_covariance',
    'stationary_mean',
    'validate',
    'validate_parameters',
    'MARKET_LABELS',
    'WEEKLY_MODEL_PATH',
    'weekly_markets_model',
]
