"""
Logger Utility - Centralized logging configuration for library modules and CLI runs
"""

import logging
import logging.handlers
import os
from typing import Optional

DETAILED_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
CONSOLE_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'

# 10MB per file, 5 backups
MAX_LOG_BYTES = 10 * 1024 * 1024
LOG_BACKUPS = 5


def _default_level() -> str:
    return os.getenv("ERGODICLAB_LOG_LEVEL", "INFO")


def _rotating_handler(path: str, level: int) -> logging.Handler:
    log_dir = os.path.dirname(path)
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
    handler = logging.handlers.RotatingFileHandler(
        path,
        maxBytes=MAX_LOG_BYTES,
        backupCount=LOG_BACKUPS,
        encoding='utf-8'
    )
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(fmt=DETAILED_FORMAT, datefmt='%Y-%m-%d %H:%M:%S'))
    return handler


def setup_logger(name: str, level: Optional[str] = None, log_file: Optional[str] = None) -> logging.Logger:
    """
    Set up a module logger with consistent formatting

    Library modules call this once at import time with ``__name__``. When the
    CLI has configured the root logger, records propagate there as well, so
    the console handler here is only attached if nothing upstream handles it.

    Args:
        name: Logger name (usually __name__)
        level: Logging level name; defaults to $ERGODICLAB_LOG_LEVEL or INFO
        log_file: Optional rotating log file for this logger only

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)

    # Avoid duplicate handlers if logger already exists
    if logger.handlers:
        return logger

    numeric_level = getattr(logging, (level or _default_level()).upper(), logging.INFO)
    logger.setLevel(numeric_level)

    if not logging.getLogger().handlers:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(numeric_level)
        console_handler.setFormatter(logging.Formatter(fmt=CONSOLE_FORMAT, datefmt='%H:%M:%S'))
        logger.addHandler(console_handler)
        logger.propagate = False

    if log_file:
        try:
            logger.addHandler(_rotating_handler(log_file, logging.DEBUG))
        except OSError as e:
            logger.warning(f"Could not create file handler: {e}")

    return logger


def setup_application_logging(level: str = "INFO", log_dir: Optional[str] = "logs",
                              log_file: str = "ergodiclab.log"):
    """
    Configure root logging for a CLI run

    Console gets ``level``; the run log gets everything from DEBUG up; a
    separate error log keeps ERROR and CRITICAL only.

    Args:
        level: Console logging level
        log_dir: Directory for log files, or None for console only
        log_file: File name of the main run log inside ``log_dir``
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)
    root_logger.handlers.clear()

    console_handler = logging.StreamHandler()
    console_handler.setLevel(getattr(logging, level.upper(), logging.INFO))
    console_handler.setFormatter(logging.Formatter(
        fmt='%(asctime)s - %(levelname)s - %(name)s - %(message)s',
        datefmt='%H:%M:%S'
    ))
    root_logger.addHandler(console_handler)

    if log_dir:
        root_logger.addHandler(_rotating_handler(os.path.join(log_dir, log_file), logging.DEBUG))
        root_logger.addHandler(_rotating_handler(os.path.join(log_dir, "error.log"), logging.ERROR))

    # module loggers created before this call hand their records to the root
    for logger in logging.Logger.manager.loggerDict.values():
        if isinstance(logger, logging.Logger) and not logger.propagate:
            logger.handlers.clear()
            logger.propagate = True

    logging.getLogger(__name__).info("Application logging configured")
