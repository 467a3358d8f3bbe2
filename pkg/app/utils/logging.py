"""Structured JSON logging helpers for simulation run events."""

from __future__ import annotations

import json
import logging
import os
from datetime import datetime, timezone
from typing import Any

from app.utils.hashing import short_token

_RESERVED = frozenset(logging.LogRecord("", 0, "", 0, "", (), None).__dict__) | {"message", "asctime"}
_CORE_FIELDS = ("step", "model", "run_id", "status", "error_code", "error_message")


class JsonFormatter(logging.Formatter):
    """Format log records as JSON with required run fields."""

    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "step": getattr(record, "step", "unknown"),
            "model": getattr(record, "model", ""),
            "run_id": getattr(record, "run_id", None),
            "status": getattr(record, "status", record.levelname.lower()),
        }

        error_code = getattr(record, "error_code", None)
        error_message = getattr(record, "error_message", None)
        if error_code is not None:
            payload["error_code"] = error_code
        if error_message is not None:
            payload["error_message"] = error_message

        for key, value in record.__dict__.items():
            if key in _RESERVED or key in _CORE_FIELDS or key.startswith("_"):
                continue
            payload[key] = value

        message = record.getMessage()
        if message:
            payload["message"] = message

        return json.dumps(payload, ensure_ascii=False, default=str)


def get_structured_logger(name: str = "fwm_sim") -> logging.Logger:
    """Return a logger configured to emit JSON records."""
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger

    level = os.getenv("FWM_LOG_LEVEL", "INFO").strip().upper() or "INFO"
    logger.setLevel(level)
    handler = logging.StreamHandler()
    handler.setFormatter(JsonFormatter())
    logger.addHandler(handler)
    logger.propagate = False
    return logger


def log_run_event(
    logger: logging.Logger,
    *,
    step: str,
    model: str,
    run_id: str,
    status: str,
    message: str = "",
    error_code: str | None = None,
    error_message: str | None = None,
    config_hash: bytes | None = None,
    **details: Any,
) -> None:
    """Emit a structured run event."""
    extra: dict[str, Any] = {
        "step": step,
        "model": model,
        "run_id": run_id,
        "status": status,
        "error_code": error_code,
        "error_message": error_message,
    }
    if config_hash is not None:
        extra["config_token"] = short_token(config_hash)
    extra.update(details)
    level = logging.ERROR if status == "failed" else logging.INFO
    logger.log(level, message, extra=extra)
