"""Named loggers for engine modules."""

from __future__ import annotations

import logging
import os
import sys
from typing import Optional

ROOT_LOGGER = "exemplar_ocr"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"
LOG_LEVEL_ENV = "EXEMPLAR_OCR_LOG_LEVEL"


def logger(module: Optional[str] = None) -> logging.Logger:
    if not module:
        return logging.getLogger(ROOT_LOGGER)
    return logging.getLogger(f"{ROOT_LOGGER}.{module}")


def log_error(title: str, message: Optional[str] = None) -> None:
    """Log the exception being handled, with traceback, under a stable title."""
    logger("errors").error("%s: %s", title, message or "unhandled error", exc_info=True)


def configure_logging(level: Optional[str] = None) -> None:
    """Install a single stderr handler on the package root logger."""
    root = logging.getLogger(ROOT_LOGGER)
    resolved = (level or os.environ.get(LOG_LEVEL_ENV) or "WARNING").upper()
    root.setLevel(getattr(logging, resolved, logging.WARNING))

    for handler in root.handlers:
        if getattr(handler, "_exemplar_ocr", False):
            return

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._exemplar_ocr = True  # type: ignore[attr-defined]
    root.addHandler(handler)
