from .bellman import (
    OracleConfig,
    OracleSolution,
    QuadraticFormSpec,
    TabulatedPolicy,
    compare_with_rule,
    expected_utility,
    log_mgf_quadratic,
    mgf_monte_carlo,
    mgf_quadratic,
    mgf_quadrature,
    numeric_optimal_weights,
    random_model,
    random_quadratic_spec,
    value_deviation,
)
from .quadrature import gauss_hermite_expectation, gaussian_rule

__all__ = [
    'OracleConfig',
    'OracleSolution',
    'QuadraticFormSpec',
    'TabulatedPolicy',
    'compare_with_rule',
    'expected_utility',
    'log_mgf_quadratic',
    'mgf_monte_carlo',
    'mgf_quadratic',
    'mgf_quadrature',
    'numeric_optimal_weights',
    'random_model',
    'random_quadratic_spec',
    'value_deviation',
    'gauss_hermite_expectation',
    'gaussian_rule',
]
