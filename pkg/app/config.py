"""Experiment configuration: JSON files with mandatory units on physical fields."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
from scipy import constants

from app.domain.errors import ConfigError
from app.domain.models import FourModeParams, Grid1D, Physical1DParams, SeedPopulations
from app.utils.hashing import params_digest
from app.utils.units import format_quantity, parse_quantity

MODELS = ("fourmode", "multimode1d", "oat")
DEFAULT_SEED = 20100901
DEFAULT_NT_CHI = 26800.0


def _q(default: Any, unit: str, *, optional: bool = False) -> Any:
    return field(default=default, metadata={"kind": "quantity", "unit": unit, "optional": optional})


def _qs(default: list[float], unit: str) -> Any:
    return field(default_factory=lambda: list(default), metadata={"kind": "quantities", "unit": unit})


def _v(default: Any, kind: str) -> Any:
    if isinstance(default, list):
        return field(default_factory=lambda: list(default), metadata={"kind": kind})
    return field(default=default, metadata={"kind": kind})


@dataclass(slots=True)
class FourModeSection:
    dt: float = _q(2.5e-8, "time")
    omega0: float | None = _q(None, "rate", optional=True)
    omegaK: float | None = _q(None, "rate", optional=True)


@dataclass(slots=True)
class MultimodeSection:
    mass: float = _q(1.4431609e-25, "mass")
    k0: float = _q(4.0 * math.pi / 780e-9, "wavenumber")
    trap_omega_x: float = _q(2.0 * math.pi * 5.0, "rate")
    r0: float = _q(0.55e-6, "length")
    t_separation: float = _q(70e-3, "time")
    x0: float = _q(0.4e-3, "length")
    scattering_length: float = _q(5.3e-9, "length")
    interaction_mode: str = _v("calibrated", "str")
    ground_state: str = _v("interacting", "str")
    grid_points: int = _v(16384, "int")
    grid_length: float = _q(2.4e-3, "length")
    k_margin: float = _v(0.3, "float")
    dt: float = _q(2e-7, "time")
    dt_imag: float = _q(2e-5, "time")
    max_imag_steps: int = _v(200000, "int")
    density_times: list[float] = _qs([0.1e-3, 0.18e-3], "time")
    separation_window: float = _q(10e-6, "length")
    separation_tolerance: float = _v(5e-3, "float")
    chunk_size: int = _v(8, "int")


@dataclass(slots=True)
class ScanSection:
    t_start: float = _q(0.0, "time")
    t_stop: float = _q(0.4e-3, "time")
    num: int = _v(41, "int")
    models: list[str] = _v(["fourmode"], "strs")


@dataclass(slots=True)
class InterferometerSection:
    phi2_points: int = _v(64, "int")
    phi2_offset_R: float = _q(math.pi, "angle")
    differential: bool = _v(False, "bool")
    apply_fwm: bool = _v(True, "bool")


@dataclass(slots=True)
class OATSection:
    N_t: float = _v(2e5, "float")
    target: float = _v(0.4, "float")
    chi_oat: float = _q(0.134, "rate")
    chi_b_ratio: float = _v(1.0, "float")
    # Relative mean-field phase (rad) picked up during the hold at differential_reference atoms.
    differential_phase: float = _v(70.0, "float")
    differential_reference: float = _v(2e5, "float")
    n_traj: int = _v(4000, "int")
    phi_points: int = _v(256, "int")
    shear_grid_points: int = _v(24, "int")
    theta_grid_points: int = _v(64, "int")

    def optimizer_options(self) -> dict[str, Any]:
        return {
            "chi_oat": self.chi_oat,
            "n_traj": self.n_traj,
            "chi_b_ratio": self.chi_b_ratio,
            "differential_phase": self.differential_phase,
            "differential_reference": self.differential_reference,
            "phi_points": self.phi_points,
            "shear_grid": np.geomspace(0.05, 50.0, self.shear_grid_points),
            "theta_points": self.theta_grid_points,
        }


@dataclass(slots=True)
class RobustnessSection:
    oat_atom_numbers: list[float] = _v([2e5, 1e3], "floats")
    oat_epsilons: list[float] = _v([-0.5, -0.35, -0.2, -0.1, -0.05, -0.02, -0.01, -0.005, 0.0,
                                    0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5], "floats")
    fwm_epsilons: list[float] = _v([-0.5, -0.25, 0.0, 0.25, 0.5], "floats")


@dataclass(slots=True)
class OutputSection:
    directory: str | None = _v(None, "optional_str")
    checkpoint: str | None = _v(None, "optional_str")


@dataclass(slots=True)
class ExperimentConfig:
    model: str = _v("fourmode", "str")
    n_traj: int = _v(1200, "int")
    rng_seed: int = _v(DEFAULT_SEED, "int")
    threads: int = _v(1, "int")
    chunk_size: int = _v(64, "int")
    nt_chi: float = _q(DEFAULT_NT_CHI, "rate")
    t_fwm: float = _q(0.12e-3, "time")
    seeds: SeedPopulations = field(default_factory=SeedPopulations, metadata={"kind": "seeds"})
    four_mode: FourModeSection = field(default_factory=FourModeSection, metadata={"kind": "section"})
    multimode: MultimodeSection = field(default_factory=MultimodeSection, metadata={"kind": "section"})
    scan: ScanSection = field(default_factory=ScanSection, metadata={"kind": "section"})
    interferometer: InterferometerSection = field(
        default_factory=InterferometerSection, metadata={"kind": "section"}
    )
    oat: OATSection = field(default_factory=OATSection, metadata={"kind": "section"})
    robustness: RobustnessSection = field(default_factory=RobustnessSection, metadata={"kind": "section"})
    output: OutputSection = field(default_factory=OutputSection, metadata={"kind": "section"})

    @property
    def chi(self) -> float:
        return self.nt_chi / self.seeds.total

    def four_mode_params(self) -> FourModeParams:
        omega0 = self.four_mode.omega0
        omegaK = self.four_mode.omegaK
        if omega0 is None:
            omega0 = 0.5 * self.multimode.trap_omega_x
        if omegaK is None:
            omegaK = omega0 + constants.hbar * self.multimode.k0**2 / (2.0 * self.multimode.mass)
        return FourModeParams(chi=self.chi, omega0=omega0, omegaK=omegaK, N_t=self.seeds.total)

    def physical_params(self, *, t_fwm: float | None = None) -> Physical1DParams:
        section = self.multimode
        return Physical1DParams(
            mass=section.mass,
            k0=section.k0,
            trap_omega_x=section.trap_omega_x,
            r0=section.r0,
            t_fwm=self.t_fwm if t_fwm is None else t_fwm,
            t_separation=section.t_separation,
            x0=section.x0,
            scattering_length=section.scattering_length,
            interaction_mode=section.interaction_mode,
        )

    def grid(self) -> Grid1D:
        return Grid1D(n_points=self.multimode.grid_points, length=self.multimode.grid_length)

    def scan_times(self) -> np.ndarray:
        return np.linspace(self.scan.t_start, self.scan.t_stop, self.scan.num)

    def phi2_grid(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.interferometer.phi2_points) / self.interferometer.phi2_points

    def to_dict(self) -> dict[str, Any]:
        return _section_to_dict(self)

    def preparation_payload(self) -> dict[str, Any]:
        """The subset of the config that determines a prepared ensemble."""
        payload = self.to_dict()
        keep = {"model", "n_traj", "rng_seed", "chunk_size", "nt_chi", "t_fwm", "seeds", "four_mode", "multimode"}
        prepared = {key: value for key, value in payload.items() if key in keep}
        prepared["apply_fwm"] = self.interferometer.apply_fwm
        return prepared

    def preparation_hash(self) -> bytes:
        return params_digest(self.preparation_payload())

    def config_hash(self) -> bytes:
        return params_digest(self.to_dict())


def _parse_value(meta: dict[str, Any], value: Any, name: str) -> Any:
    kind = meta["kind"]
    if kind == "quantity":
        if value is None and meta.get("optional"):
            return None
        return parse_quantity(value, meta["unit"], field_name=name)
    if kind == "quantities":
        if not isinstance(value, list):
            raise ConfigError("invalid_type", f"Field '{name}' must be a list.", {"field": name})
        return [parse_quantity(item, meta["unit"], field_name=name) for item in value]
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("invalid_type", f"Field '{name}' must be an integer.", {"field": name, "value": value})
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("invalid_type", f"Field '{name}' must be a number.", {"field": name, "value": value})
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError("invalid_type", f"Field '{name}' must be true or false.", {"field": name})
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError("invalid_type", f"Field '{name}' must be a string.", {"field": name})
        return value
    if kind == "optional_str":
        if value is not None and not isinstance(value, str):
            raise ConfigError("invalid_type", f"Field '{name}' must be a string or null.", {"field": name})
        return value
    if kind == "floats":
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise ConfigError("invalid_type", f"Field '{name}' must be a list of numbers.", {"field": name})
        return [float(v) for v in value]
    if kind == "strs":
        if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
            raise ConfigError("invalid_type", f"Field '{name}' must be a list of strings.", {"field": name})
        return list(value)
    raise ConfigError("invalid_schema", f"Unknown field kind '{kind}'.", {"field": name})


def _format_value(meta: dict[str, Any], value: Any) -> Any:
    kind = meta["kind"]
    if kind == "quantity":
        return None if value is None else format_quantity(value, meta["unit"])
    if kind == "quantities":
        return [format_quantity(item, meta["unit"]) for item in value]
    if kind in {"floats", "strs"}:
        return list(value)
    return value


def _section_from_dict(cls: type, payload: Any, prefix: str) -> Any:
    if not isinstance(payload, dict):
        raise ConfigError("invalid_type", f"Section '{prefix or 'root'}' must be an object.", {"section": prefix})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError("unknown_field", f"Unknown field(s) in '{prefix or 'root'}': {unknown}", {"fields": unknown})

    kwargs: dict[str, Any] = {}
    for f in fields(cls):
        if f.name not in payload:
            continue
        name = f"{prefix}.{f.name}" if prefix else f.name
        kind = f.metadata.get("kind")
        if kind == "section":
            kwargs[f.name] = _section_from_dict(type(f.default_factory()), payload[f.name], name)
        elif kind == "seeds":
            kwargs[f.name] = _seeds_from_dict(payload[f.name], name)
        else:
            kwargs[f.name] = _parse_value(f.metadata, payload[f.name], name)
    return cls(**kwargs)


def _section_to_dict(section: Any) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in fields(section):
        value = getattr(section, f.name)
        kind = f.metadata.get("kind")
        if kind == "section":
            out[f.name] = _section_to_dict(value)
        elif kind == "seeds":
            out[f.name] = _seeds_to_dict(value)
        else:
            out[f.name] = _format_value(f.metadata, value)
    return out


_SEED_COUNTS = ("N_aL0", "N_aR0", "N_bL0", "N_bR0")
_SEED_PHASES = ("phase_aL", "phase_aR", "phase_bL", "phase_bR")


def _seeds_from_dict(payload: Any, prefix: str) -> SeedPopulations:
    if not isinstance(payload, dict):
        raise ConfigError("invalid_type", f"Section '{prefix}' must be an object.", {"section": prefix})
    unknown = sorted(set(payload) - set(_SEED_COUNTS) - set(_SEED_PHASES))
    if unknown:
        raise ConfigError("unknown_field", f"Unknown field(s) in '{prefix}': {unknown}", {"fields": unknown})
    kwargs: dict[str, Any] = {}
    for name in _SEED_COUNTS:
        if name in payload:
            kwargs[name] = _parse_value({"kind": "float"}, payload[name], f"{prefix}.{name}")
    for name in _SEED_PHASES:
        if name in payload:
            kwargs[name] = parse_quantity(payload[name], "angle", field_name=f"{prefix}.{name}")
    return SeedPopulations(**kwargs)


def _seeds_to_dict(seeds: SeedPopulations) -> dict[str, Any]:
    out: dict[str, Any] = {name: float(getattr(seeds, name)) for name in _SEED_COUNTS}
    out.update({name: format_quantity(getattr(seeds, name), "angle") for name in _SEED_PHASES})
    return out


def config_from_dict(payload: dict[str, Any]) -> ExperimentConfig:
    config = _section_from_dict(ExperimentConfig, payload, "")
    if config.model not in MODELS:
        raise ConfigError("invalid_model", f"model must be one of {MODELS}.", {"model": config.model})
    return config


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Load a JSON config file; ``None`` yields the defaults."""
    if path is None:
        return ExperimentConfig()
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError("config_not_found", f"Config file not found: {config_path}", {"path": str(config_path)})
    try:
        payload = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("config_not_json", f"Config is not valid JSON: {exc}", {"path": str(config_path)}) from exc
    return config_from_dict(payload)


def dump_config(config: ExperimentConfig, path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(config.to_dict(), indent=2), encoding="utf-8")
    return out


def apply_overrides(config: ExperimentConfig, *, seed: int | None = None, threads: int | None = None) -> ExperimentConfig:
    """Apply CLI/environment overrides in place and return the config."""
    if seed is None:
        env_seed = os.getenv("FWM_SEED", "").strip()
        try:
            seed = int(env_seed) if env_seed else None
        except ValueError as exc:
            raise ConfigError("invalid_seed", "FWM_SEED must be an integer.", {"seed": env_seed}) from exc
    if seed is not None:
        if seed < 0 or seed >= 2**64:
            raise ConfigError("invalid_seed", "Seed must be an unsigned 64-bit integer.", {"seed": seed})
        config.rng_seed = seed
    if threads is None:
        env_threads = os.getenv("FWM_THREADS", "").strip()
        try:
            threads = int(env_threads) if env_threads else None
        except ValueError as exc:
            raise ConfigError("invalid_threads", "FWM_THREADS must be an integer.", {"threads": env_threads}) from exc
    if threads is not None:
        if threads < 1:
            raise ConfigError("invalid_threads", "threads must be >= 1.", {"threads": threads})
        config.threads = threads
    return config
