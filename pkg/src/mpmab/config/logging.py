from __future__ import annotations

import sys

from loguru import logger

from mpmab.config.settings import settings

_FORMAT = (
    "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan> - <level>{message}</level>"
)


def configure_logging(level: str | None = None) -> None:
    """Route loguru to a single stderr sink at `level` (defaults to settings.LOG_LEVEL)."""
    logger.remove()
    logger.add(sys.stderr, level=(level or settings.LOG_LEVEL).upper(), format=_FORMAT)
