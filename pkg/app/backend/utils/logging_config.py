import logging
import os
import sys
from datetime import datetime
from pathlib import Path

import boto3
import watchtower

LOGGER_ROOT = "app"


def _log_dir() -> Path | None:
    configured = os.getenv("ALLOC_LOG_DIR")
    if configured is None:
        return Path(__file__).resolve().parent.parent / "logs"
    if configured.strip() == "":
        return None
    return Path(configured)


def setup_logging(component_name: str, level: int = logging.INFO):
    """
    Sets up console, file and (optionally) CloudWatch logging for a component

    Args:
        component_name: Name of the component (e.g., 'cli', 'api'); used for
            the log file and the CloudWatch stream name
        level: Level applied to the package logger
    """
    logger = logging.getLogger(LOGGER_ROOT)
    logger.setLevel(level)

    # Clear any existing handlers
    logger.handlers = []

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    logs_dir = _log_dir()
    if logs_dir is not None:
        logs_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(
            logs_dir / f"{component_name}_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    log_group = os.getenv("ALLOC_CLOUDWATCH_LOG_GROUP")
    if log_group:
        cloudwatch_handler = watchtower.CloudWatchLogHandler(
            log_group_name=log_group,
            log_stream_name=f'{component_name}-{datetime.now().strftime("%Y-%m-%d")}',
            boto3_client=boto3.client('logs')
        )
        cloudwatch_handler.setFormatter(formatter)
        logger.addHandler(cloudwatch_handler)

    logger.propagate = False
    return logger
