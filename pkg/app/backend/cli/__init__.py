from .config import RunConfig, build_run_config
from .main import build_parser, main

__all__ = [
    'RunConfig',
    'build_run_config',
    'build_parser',
    'main',
]
