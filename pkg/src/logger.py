# src/logger.py
import logging

from config import LOG_LEVEL

_level = LOG_LEVEL
_names = set()


def setup_logger(name, level=None):
    """Logger with a single stream handler, shared by every service class"""
    logger = logging.getLogger(name)
    logger.setLevel(level or _level)

    if not logger.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    _names.add(name)
    return logger


def set_log_level(level):
    """Retune every logger made so far and the default for later ones"""
    global _level
    level = level.upper()
    if level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
        raise ValueError(f"unknown log level {level}")
    _level = level
    for name in _names:
        logging.getLogger(name).setLevel(level)
