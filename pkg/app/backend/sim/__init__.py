from .ecdf import (
    CENTRAL_BAND,
    ComparisonReport,
    Ecdf,
    ProbeResult,
    central_band,
    compare,
    ecdf,
    ecdf_frame,
    format_ecdf_csv,
    format_samples_csv,
)
from .wealth import BLOCK_SIZE, SimulationConfig, WealthPaths, simulate_wealth

__all__ = [
    'CENTRAL_BAND',
    'ComparisonReport',
    'Ecdf',
    'ProbeResult',
    'central_band',
    'compare',
    'ecdf',
    'ecdf_frame',
    'format_ecdf_csv',
    'format_samples_csv',
    'BLOCK_SIZE',
    'SimulationConfig',
    'WealthPaths',
    'simulate_wealth',
]
