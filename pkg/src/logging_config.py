"""
Logging configuration for nonga.

Provides structured logging with:
- File and console handlers
- Log rotation
- Run ID tracking (one ID per experiment run, per thread)
- Configurable log levels
"""

import logging
import sys
import uuid
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler
from pathlib import Path
from threading import local
from typing import Generator, Optional

from .config import get_config

LOGGER_NAME = "nonga"

# Thread-local storage for run ID
_thread_local = local()


def get_run_id() -> str:
    """Get the current run ID for this thread."""
    return getattr(_thread_local, "run_id", "no-run-id")


def set_run_id(run_id: str) -> None:
    """Set the run ID for this thread."""
    _thread_local.run_id = run_id


def generate_run_id() -> str:
    """Generate a new unique run ID."""
    return str(uuid.uuid4())[:8]


@contextmanager
def run_context(run_id: Optional[str] = None) -> Generator[str, None, None]:
    """
    Context manager for run ID tracking.

    Usage:
        with run_context("doublewell-s3") as run_id:
            logger.info("Starting assimilation")
            # All logs in this context will include the run ID
    """
    old_id = getattr(_thread_local, "run_id", None)
    new_id = run_id or generate_run_id()
    set_run_id(new_id)
    try:
        yield new_id
    finally:
        if old_id is None:
            delattr(_thread_local, "run_id")
        else:
            _thread_local.run_id = old_id


class RunIdFilter(logging.Filter):
    """Logging filter that adds run ID to log records."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = get_run_id()
        return True


def setup_logging(
    level: Optional[str] = None,
    log_file: Optional[str] = None,
    console: bool = True
) -> logging.Logger:
    """
    Set up application logging.

    Configures the application logger with:
    - Rotating file handler (if log_file specified)
    - Console handler on stderr (if console=True); stdout stays free for results
    - Run ID tracking

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL).
               If None, uses config value.
        log_file: Path to log file. If None, uses config value; "" disables it.
        console: Whether to log to console.

    Returns:
        Configured logger instance.
    """
    config = get_config()

    if level is None:
        level = config.logging.level
    numeric_level = getattr(logging, level.upper(), logging.INFO)

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(numeric_level)

    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    log_format = config.logging.format
    if "%(run_id)s" not in log_format:
        log_format = log_format.replace(
            "%(message)s",
            "[%(run_id)s] %(message)s"
        )
    formatter = logging.Formatter(log_format)

    run_filter = RunIdFilter()

    if log_file is None:
        log_file = config.logging.file

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler = RotatingFileHandler(
            log_path,
            maxBytes=config.logging.max_bytes,
            backupCount=config.logging.backup_count,
            encoding="utf-8"
        )
        file_handler.setLevel(numeric_level)
        file_handler.setFormatter(formatter)
        file_handler.addFilter(run_filter)
        logger.addHandler(file_handler)

    if console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(numeric_level)
        console_handler.setFormatter(formatter)
        console_handler.addFilter(run_filter)
        logger.addHandler(console_handler)

    # Prevent propagation to root logger
    logger.propagate = False

    return logger


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance for a specific module.

    Creates a child logger of the application logger, inheriting
    its configuration. Handlers are installed by setup_logging(); until
    then records go nowhere, which keeps library use quiet.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Logger instance

    Usage:
        logger = get_logger(__name__)
        logger.info("Something happened")
    """
    base_logger = logging.getLogger(LOGGER_NAME)
    if not base_logger.handlers:
        base_logger.addHandler(logging.NullHandler())
        base_logger.propagate = False

    if name.startswith("src."):
        name = name[4:]
    return logging.getLogger(f"{LOGGER_NAME}.{name}")
