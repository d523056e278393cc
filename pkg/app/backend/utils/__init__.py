from .errors import (
    AllocationError,
    UsageError,
    DataError,
    NumericalError,
    DimensionMismatchError,
    SeriesFormatError,
    NotPositiveDefiniteError,
    SingularRegressorError,
    MgfUndefinedError,
    ConvergenceError,
    ZeroWealthError,
    OracleCostError,
    HorizonMismatchError,
)
from .logging_config import setup_logging
from .numerics import CholeskyFactor, check_positive_definite, format_float, format_row, pd_margin, spectral_radius
from .s3_utils import create_s3_session, parse_s3_uri, write_output, write_text_to_s3
__all__ = [
    'AllocationError',
    'UsageError',
    'DataError',
    'NumericalError',
    'DimensionMismatchError',
    'SeriesFormatError',
    'NotPositiveDefiniteError',
    'SingularRegressorError',
    'MgfUndefinedError',
    'ConvergenceError',
    'ZeroWealthError',
    'OracleCostError',
    'HorizonMismatchError',
    'setup_logging',
    'CholeskyFactor',
    'check_positive_definite',
    'format_float',
    'format_row',
    'pd_margin',
    'spectral_radius',
    'create_s3_session',
    'parse_s3_uri',
    'write_output',
    'write_text_to_s3',
]
