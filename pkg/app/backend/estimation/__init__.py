from .var_fit import FitReport, ReturnSeries, fit_var1, format_fit_report, load_series

__all__ = [
    'FitReport',
    'ReturnSeries',
    'fit_var1',
    'format_fit_report',
    'load_series',
]
