"""Exact two-mode OAT sequence in the fixed-N number basis |N - m, m>, m = n_b.

A coherent input is a Poisson mixture of fixed-N sectors: every operation in
the sequence conserves N, so the sectors never interfere.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg, stats

from app.domain.errors import ConfigError
from app.domain.models import OATParams, SweepResult
from app.interferometry.sweep import summarize_sweep
from app.models.oat import mean_field_phase

MAX_EXACT_ATOMS = 4000
POISSON_WIDTH = 8.0
INITIAL_STATES = ("coherent", "number")


def _jx(N: int) -> np.ndarray:
    """Jx = (a^dag b + b^dag a)/2 in the basis indexed by n_b."""
    m = np.arange(N)
    # <m+1| b^dag a |m> = sqrt((m+1)(N-m))
    off = 0.5 * np.sqrt((m + 1.0) * (N - m))
    return np.diag(off, -1) + np.diag(off, 1)


def pulse_unitary(N: int) -> np.ndarray:
    """exp(-i (pi/2) Jx), i.e. a -> (a - i b)/sqrt(2)."""
    return linalg.expm(-0.5j * np.pi * _jx(N))


def kerr_phases(N: int, chi_a: float, chi_b: float, t: float) -> np.ndarray:
    m = np.arange(N + 1, dtype=float)
    n_a = N - m
    return np.exp(-0.5j * t * (chi_a * n_a * (n_a - 1.0) + chi_b * m * (m - 1.0)))


def _sector_moments(N: int, params: OATParams, phi_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """<S>, <S^2> and <n_b> over ``phi_grid`` for exactly N atoms."""
    m = np.arange(N + 1, dtype=float)
    pulse = pulse_unitary(N)

    psi = np.zeros(N + 1, dtype=np.complex128)
    psi[0] = 1.0
    psi = pulse @ psi
    psi = kerr_phases(N, params.chi_oat, params.chi_oat * params.chi_b_ratio, params.t_shear) * psi
    rotation = params.theta + float(mean_field_phase(float(N), params))
    psi = pulse @ (np.exp(1j * rotation * m) * psi)

    staged = np.exp(1j * np.outer(phi_grid, m)) * psi
    prob = np.abs(staged @ pulse.T) ** 2
    s_values = N - 2.0 * m
    return prob @ s_values, prob @ s_values**2, prob @ m


def _sector_weights(N_t: float, initial: str) -> tuple[np.ndarray, np.ndarray]:
    if initial == "number":
        return np.array([int(round(N_t))]), np.array([1.0])
    width = POISSON_WIDTH * math.sqrt(N_t) + 1.0
    low = max(0, int(math.floor(N_t - width)))
    high = min(MAX_EXACT_ATOMS, int(math.ceil(N_t + width)))
    sizes = np.arange(low, high + 1)
    weights = stats.poisson.pmf(sizes, N_t)
    return sizes, weights / weights.sum()


def exact_oat_sequence(
    N_t: float,
    params: OATParams,
    phi_grid: np.ndarray,
    *,
    initial: str = "coherent",
) -> SweepResult:
    """Exact <S> and V(S) over ``phi_grid`` with all atoms starting in mode a.

    ``initial="coherent"`` mixes the sectors with Poisson weights of mean
    ``N_t`` (the state the Wigner model samples); ``"number"`` uses exactly
    ``round(N_t)`` atoms.
    """
    if initial not in INITIAL_STATES:
        raise ConfigError("invalid_initial_state", f"initial must be one of {INITIAL_STATES}.", {"initial": initial})
    if not 1 <= N_t <= MAX_EXACT_ATOMS:
        raise ConfigError(
            "exact_size_out_of_range", f"Exact model needs 1 <= N <= {MAX_EXACT_ATOMS}.", {"N": N_t}
        )
    phi_grid = np.asarray(phi_grid, dtype=float)
    mean_S = np.zeros(phi_grid.size)
    second_S = np.zeros(phi_grid.size)
    mean_b = np.zeros(phi_grid.size)
    mean_N = 0.0
    sizes, weights = _sector_weights(float(N_t), initial)
    for size, weight in zip(sizes, weights):
        s1, s2, nb = _sector_moments(int(size), params, phi_grid)
        mean_S += weight * s1
        second_S += weight * s2
        mean_b += weight * nb
        mean_N += weight * size

    populations = np.zeros((phi_grid.size, 4))
    populations[:, 1] = mean_b
    populations[:, 0] = mean_N - mean_b
    return summarize_sweep(phi_grid, mean_S, second_S - mean_S**2, populations)
