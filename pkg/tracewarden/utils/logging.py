# Adapted from the diffusers/optuna logging utilities (Apache-2.0).
"""Library logging: one configured `tracewarden` root logger, env-driven verbosity and a switchable tqdm."""

import json
import logging
import os
import sys
import threading
from logging import CRITICAL, DEBUG, ERROR, INFO, WARNING  # NOQA
from typing import Optional

from tqdm import auto as tqdm_lib

_lock = threading.Lock()
_stderr_handler: Optional[logging.Handler] = None
_progress_enabled = True

VERBOSITY_ENV = "TRACEWARDEN_VERBOSITY"
EXPLICIT_FORMAT = "[%(levelname)s|%(filename)s:%(lineno)s] %(asctime)s >> %(message)s"

log_levels = {
    "debug": DEBUG,
    "info": INFO,
    "warning": WARNING,
    "error": ERROR,
    "critical": CRITICAL,
}


def _level_from_env() -> int:
    name = os.getenv(VERBOSITY_ENV, "").strip().lower()
    if not name:
        return WARNING
    if name not in log_levels:
        logging.getLogger().warning(f"Unknown {VERBOSITY_ENV}={name}, has to be one of: {', '.join(log_levels)}")
        return WARNING
    return log_levels[name]


def _root() -> logging.Logger:
    return logging.getLogger(__name__.split(".")[0])


def _ensure_configured() -> logging.Logger:
    global _stderr_handler

    root = _root()
    with _lock:
        if _stderr_handler is None:
            _stderr_handler = logging.StreamHandler(sys.stderr)
            _stderr_handler.setFormatter(logging.Formatter(EXPLICIT_FORMAT))
            root.addHandler(_stderr_handler)
            root.setLevel(_level_from_env())
            root.propagate = False
    return root


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Logger for a tracewarden module. Modules call it once at import time:

    ```py
    logger = get_logger(__name__)  # pylint: disable=invalid-name
    ```
    """
    _ensure_configured()
    return logging.getLogger(name or _root().name)


def get_verbosity() -> int:
    return _ensure_configured().getEffectiveLevel()


def set_verbosity(verbosity: int) -> None:
    """
    Args:
        verbosity (`int`):
            One of `tracewarden.utils.logging.{CRITICAL, ERROR, WARNING, INFO, DEBUG}`.
    """
    _ensure_configured().setLevel(verbosity)


def set_verbosity_info() -> None:
    set_verbosity(INFO)


def set_verbosity_warning() -> None:
    set_verbosity(WARNING)


def set_verbosity_debug() -> None:
    set_verbosity(DEBUG)


def set_verbosity_error() -> None:
    set_verbosity(ERROR)


def enable_explicit_format() -> None:
    """Every library handler prints `[LEVELNAME|FILENAME:LINE NUMBER] TIME >> MESSAGE`."""
    for handler in _ensure_configured().handlers:
        handler.setFormatter(logging.Formatter(EXPLICIT_FORMAT))


class JsonLineFormatter(logging.Formatter):
    # extra fields come from `extra={"fields": {...}}`
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "ts": round(record.created, 6),
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        }
        fields = getattr(record, "fields", None)
        if isinstance(fields, dict):
            payload.update(fields)
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


def enable_json_format() -> None:
    """Switch every library handler to one JSON object per record."""
    for handler in _ensure_configured().handlers:
        handler.setFormatter(JsonLineFormatter())


def add_file_handler(path: str, json_lines: bool = False) -> logging.Handler:
    """Mirror library records into `path`, e.g. a log kept next to a capture."""
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(JsonLineFormatter() if json_lines else logging.Formatter(EXPLICIT_FORMAT))
    _ensure_configured().addHandler(handler)
    return handler


def remove_handler(handler: logging.Handler) -> None:
    _ensure_configured().removeHandler(handler)
    handler.close()


class _NoProgress:
    """Stands in for a tqdm bar when progress bars are off."""

    def __init__(self, iterable=None, *args, **kwargs):  # pylint: disable=unused-argument
        self._iterable = iterable

    def __iter__(self):
        return iter(self._iterable if self._iterable is not None else ())

    def __getattr__(self, _):
        return lambda *args, **kwargs: None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def tqdm(*args, **kwargs):
    if _progress_enabled:
        return tqdm_lib.tqdm(*args, **kwargs)
    return _NoProgress(*args, **kwargs)


def is_progress_bar_enabled() -> bool:
    return _progress_enabled


def enable_progress_bar() -> None:
    global _progress_enabled
    _progress_enabled = True


def disable_progress_bar() -> None:
    global _progress_enabled
    _progress_enabled = False
