from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from app.domain.models import Grid1D, Physical1DParams, SeedPopulations
from app.models.multimode import HBAR, MultimodeSetup, physical_u1d

# Rb-87, 5 Hz trap: harmonic-oscillator length of about 4.8 um.
SMALL_K0 = 2.0e6


def gaussian_mode(grid: Grid1D, params: Physical1DParams) -> np.ndarray:
    a_ho = math.sqrt(HBAR / (params.mass * params.trap_omega_x))
    psi = np.exp(-0.5 * (grid.x / a_ho) ** 2)
    return psi / math.sqrt(np.sum(psi**2) * grid.dx)


@pytest.fixture
def small_grid() -> Grid1D:
    return Grid1D(n_points=256, length=200e-6)


@pytest.fixture
def small_params() -> Physical1DParams:
    params = Physical1DParams(
        k0=SMALL_K0,
        t_separation=40e-3,
        x0=29e-6,
        interaction_mode="physical",
    )
    params.U_1d = physical_u1d(params)
    return params


@pytest.fixture
def small_seeds() -> SeedPopulations:
    return SeedPopulations(N_aL0=1000.0, N_aR0=10.0, N_bL0=10.0, N_bR0=1000.0)


@pytest.fixture
def small_setup(small_grid, small_params, small_seeds) -> MultimodeSetup:
    return MultimodeSetup(
        grid=small_grid,
        params=small_params,
        psi0=gaussian_mode(small_grid, small_params),
        seeds=small_seeds,
        dt=1e-6,
        separation_window=2e-6,
    )


@pytest.fixture
def write_config(tmp_path: Path):
    """Write a small, fast config file and return its path."""

    def _write(**overrides: Any) -> Path:
        payload: dict[str, Any] = {
            "model": "fourmode",
            "n_traj": 64,
            "rng_seed": 7,
            "chunk_size": 16,
            "t_fwm": "0.02 ms",
            "scan": {"t_start": "0 ms", "t_stop": "0.02 ms", "num": 3, "models": ["fourmode"]},
            "interferometer": {"phi2_points": 32},
            "output": {"directory": str(tmp_path / "artifacts")},
        }
        payload.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write
