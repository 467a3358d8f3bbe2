"""Unit-bearing quantity strings such as ``"0.12 ms"`` or ``"5 Hz"``."""

from __future__ import annotations

import math
import re

from scipy import constants

from app.domain.errors import ConfigError

_QUANTITY_RE = re.compile(r"\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s+([^\s].*?)\s*")

UNIT_FACTORS: dict[str, dict[str, float]] = {
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9},
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9},
    # Hz and kHz are cycles; stored values are always angular.
    "rate": {
        "rad/s": 1.0,
        "1/s": 1.0,
        "s^-1": 1.0,
        "Hz": 2.0 * math.pi,
        "kHz": 2.0 * math.pi * 1e3,
    },
    "wavenumber": {"rad/m": 1.0, "1/m": 1.0, "1/um": 1e6, "1/µm": 1e6, "1/nm": 1e9},
    "mass": {"kg": 1.0, "u": constants.atomic_mass},
    "energy_length": {"J*m": 1.0, "J·m": 1.0},
    "angle": {"rad": 1.0, "deg": math.pi / 180.0},
}

CANONICAL_UNITS: dict[str, str] = {
    "time": "s",
    "length": "m",
    "rate": "rad/s",
    "wavenumber": "rad/m",
    "mass": "kg",
    "energy_length": "J*m",
    "angle": "rad",
}


def parse_quantity(text: object, dimension: str, *, field_name: str = "") -> float:
    """Return the SI value of a quantity string, or raise ConfigError.

    Bare numbers are rejected: every physical field must state its unit.
    """
    factors = UNIT_FACTORS.get(dimension)
    if factors is None:
        raise ConfigError("unknown_dimension", f"Unknown dimension '{dimension}'.", {"field": field_name})
    if not isinstance(text, str):
        raise ConfigError(
            "missing_unit",
            f"Field '{field_name}' must be a string with an explicit {dimension} unit.",
            {"field": field_name, "value": text},
        )

    match = _QUANTITY_RE.fullmatch(text)
    if match is None:
        raise ConfigError(
            "missing_unit",
            f"Field '{field_name}' must look like '<number> <unit>'.",
            {"field": field_name, "value": text},
        )
    number, unit = match.groups()
    if unit not in factors:
        raise ConfigError(
            "unknown_unit",
            f"Unit '{unit}' is not a {dimension} unit for field '{field_name}'.",
            {"field": field_name, "unit": unit, "allowed": sorted(factors)},
        )

    value = float(number) * factors[unit]
    if not math.isfinite(value):
        raise ConfigError("non_finite_quantity", f"Field '{field_name}' is not finite.", {"field": field_name})
    return value


def format_quantity(value: float, dimension: str) -> str:
    return f"{float(value)!r} {CANONICAL_UNITS[dimension]}"
