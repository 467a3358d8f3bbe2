"""Typed failures raised by the simulator and mapped to CLI exit codes."""

from __future__ import annotations

from typing import Any


class SimulationError(Exception):
    """Base failure carrying a machine-readable code and details."""

    exit_code = 1

    def __init__(self, code: str, message: str, details: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.code = code
        self.message = message
        self.details = dict(details or {})

    def to_payload(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}


class ConfigError(SimulationError, ValueError):
    exit_code = 2


class NumericalError(SimulationError, RuntimeError):
    exit_code = 3

    @property
    def trajectory(self) -> int | None:
        index = self.details.get("trajectory")
        return int(index) if index is not None else None


class ConvergenceError(NumericalError):
    pass


class AliasingError(NumericalError):
    pass


class SeparationError(NumericalError):
    pass


class CheckpointError(SimulationError):
    exit_code = 4
