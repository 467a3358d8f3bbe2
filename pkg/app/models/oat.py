"""Two-mode one-axis-twisting (Kerr shear) interferometer in the truncated Wigner picture.

Sequence: coherent N in mode a, pi/2 pulse, Kerr shear for t_shear plus the
relative mean-field phase of the hold, phase theta on b, pi/2 pulse,
interrogation phase phi on b, pi/2 pulse, then S = N_a - N_b.

The mean-field phase follows the 1D Thomas-Fermi chemical potential,
Phi(N) = differential_phase * (N / differential_reference) ** (2/3), and is
evaluated per trajectory on that trajectory's atom number. It is what makes a
frozen theta go stale when the atom number drifts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from app.domain.errors import ConfigError
from app.domain.models import TWO_PI, OATParams, SweepResult
from app.interferometry.pulses import beam_splitter
from app.interferometry.sweep import summarize_sweep
from app.wigner.core import run_ensemble, sample_coherent

logger = logging.getLogger(__name__)

# Var_W(|a|^2 - |b|^2) exceeds the normally-ordered variance by 2 * 1/4.
TWO_MODE_VARIANCE_OFFSET = 0.5
GOLDEN_XTOL = 1e-4
MEAN_FIELD_EXPONENT = 2.0 / 3.0


def sample_two_mode(N_t: float, rng: np.random.Generator) -> np.ndarray:
    return sample_coherent(np.array([math.sqrt(N_t), 0.0]), rng)


def evolve_oat_tw(state: np.ndarray, chi_oat: float, t: float, *, chi_b: float | None = None) -> np.ndarray:
    """Exact Wigner solution of the self-Kerr evolution over time t."""
    state = np.asarray(state, dtype=np.complex128)
    chi_b = chi_oat if chi_b is None else chi_b
    rates = np.array([chi_oat, chi_b])
    return state * np.exp(-1j * rates * (np.abs(state) ** 2 - 1.0) * t)


def _pulse(state: np.ndarray) -> np.ndarray:
    a, b = beam_splitter(state[..., 0], state[..., 1])
    return np.stack([a, b], axis=-1)


def _phase(state: np.ndarray, phi: float | np.ndarray) -> np.ndarray:
    out = np.array(np.broadcast_to(state, np.broadcast_shapes(state.shape, np.shape(phi) + (2,))))
    out[..., 1] = out[..., 1] * np.exp(1j * np.asarray(phi))
    return out


def mean_field_phase(N: float | np.ndarray, params: OATParams) -> np.ndarray:
    ratio = np.clip(np.asarray(N, dtype=float), 0.0, None) / params.differential_reference
    return params.differential_phase * ratio**MEAN_FIELD_EXPONENT


def shear_and_rotate(state: np.ndarray, params: OATParams) -> np.ndarray:
    """Everything before the interrogation phase."""
    split = _pulse(state)
    sheared = evolve_oat_tw(split, params.chi_oat, params.t_shear, chi_b=params.chi_oat * params.chi_b_ratio)
    # |a|^2 + |b|^2 - 1 estimates the trajectory's atom number.
    total = np.sum(np.abs(sheared) ** 2, axis=-1) - 1.0
    return _pulse(_phase(sheared, params.theta + mean_field_phase(total, params)))


def _readout_sweep(rotated: np.ndarray, phi_grid: np.ndarray) -> SweepResult:
    final = _pulse(_phase(rotated, phi_grid[:, np.newaxis]))
    abs_sq = np.abs(final) ** 2
    signal = abs_sq[..., 0] - abs_sq[..., 1]
    var_S = np.var(signal, axis=1, ddof=1) - TWO_MODE_VARIANCE_OFFSET
    mean_pops = abs_sq.mean(axis=1) - 0.5
    populations = np.zeros((phi_grid.size, 4))
    populations[:, 0] = mean_pops[:, 0]
    populations[:, 1] = mean_pops[:, 1]
    return summarize_sweep(phi_grid, signal.mean(axis=1), var_S, populations)


def _initial_ensemble(N_t: float, n_traj: int, seed: int, threads: int = 1) -> np.ndarray:
    result = run_ensemble(
        lambda batch: batch,
        lambda rng: sample_two_mode(N_t, rng),
        n_traj,
        seed,
        {"state": lambda states: states},
        threads=threads,
    )
    return result.samples["state"]


def oat_full_sequence(
    N_t: float,
    params: OATParams,
    phi_grid: np.ndarray,
    *,
    n_traj: int,
    seed: int,
    threads: int = 1,
    initial: np.ndarray | None = None,
) -> SweepResult:
    if not N_t > 0:
        raise ConfigError("invalid_total_number", "N_t must be > 0.", {"N_t": N_t})
    phi_grid = np.asarray(phi_grid, dtype=float)
    state = _initial_ensemble(N_t, n_traj, seed, threads) if initial is None else initial
    return _readout_sweep(shear_and_rotate(state, params), phi_grid)


@dataclass(slots=True)
class _ShearSearch:
    N_t: float
    chi_oat: float
    chi_b_ratio: float
    differential_phase: float
    differential_reference: float
    phi_grid: np.ndarray
    initial: np.ndarray
    theta_grid: np.ndarray

    def params(self, shear: float, theta: float) -> OATParams:
        return OATParams(
            chi_oat=self.chi_oat,
            t_shear=shear / (self.chi_oat * self.N_t),
            theta=theta,
            N_t=self.N_t,
            chi_b_ratio=self.chi_b_ratio,
            differential_phase=self.differential_phase,
            differential_reference=self.differential_reference,
        )

    def sweep(self, shear: float, theta: float) -> SweepResult:
        return _readout_sweep(shear_and_rotate(self.initial, self.params(shear, theta)), self.phi_grid)

    def objective(self, shear: float, theta: float) -> float:
        value = self.sweep(shear, theta).min_delta_phi_sqrt_nt
        return value if math.isfinite(value) else 1e6

    def best_theta(self, shear: float) -> tuple[float, float]:
        values = np.array([self.objective(shear, theta) for theta in self.theta_grid])
        best = int(np.argmin(values))
        step = self.theta_grid[1] - self.theta_grid[0]
        try:
            result = optimize.minimize_scalar(
                lambda theta: self.objective(shear, theta),
                bracket=(self.theta_grid[best] - step, self.theta_grid[best], self.theta_grid[best] + step),
                method="golden",
                tol=GOLDEN_XTOL,
            )
        except ValueError:
            return float(self.theta_grid[best]), float(values[best])
        if result.fun > values[best]:
            return float(self.theta_grid[best]), float(values[best])
        return float(result.x) % TWO_PI, float(result.fun)


def optimize_oat(
    N_t: float,
    target: float,
    *,
    chi_oat: float,
    n_traj: int,
    seed: int,
    chi_b_ratio: float = 1.0,
    differential_phase: float = 0.0,
    differential_reference: float = 1.0,
    phi_points: int = 256,
    shear_grid: np.ndarray | None = None,
    theta_points: int = 64,
    threads: int = 1,
) -> OATParams:
    """Least shear chi*t*N_t (with its best theta) reaching min dphi*sqrt(N_t) <= target.

    Every evaluation reuses one set of initial Wigner samples, so the
    objective is smooth in (shear, theta). When the target is never reached
    the best point found is returned with ``reached=False``.
    """
    if not target > 0:
        raise ConfigError("invalid_target", "Target sensitivity must be > 0.", {"target": target})
    shears = np.geomspace(0.05, 50.0, 24) if shear_grid is None else np.asarray(shear_grid, dtype=float)
    search = _ShearSearch(
        N_t=N_t,
        chi_oat=chi_oat,
        chi_b_ratio=chi_b_ratio,
        differential_phase=differential_phase,
        differential_reference=differential_reference,
        phi_grid=TWO_PI * np.arange(phi_points) / phi_points,
        initial=_initial_ensemble(N_t, n_traj, seed, threads),
        theta_grid=TWO_PI * np.arange(theta_points) / theta_points,
    )
    coarse = [search.best_theta(float(shear)) for shear in shears]
    values = np.array([value for _, value in coarse])
    reached = np.flatnonzero(values <= target)

    if reached.size:
        index = int(reached[0])
        grid_point = (float(shears[index]), coarse[index][0])
        shear, theta = grid_point
        if index > 0:

            def gap(trial: float) -> float:
                return search.best_theta(trial)[1] - target

            try:
                shear = float(optimize.brentq(gap, float(shears[index - 1]), shear, xtol=1e-3 * shear))
                theta = search.best_theta(shear)[0]
            except ValueError:
                logger.debug("Shear refinement bracket lost sign; keeping grid value")
    else:
        index = int(np.argmin(values))
        shear, theta = float(shears[index]), coarse[index][0]
        low = float(shears[max(index - 1, 0)])
        high = float(shears[min(index + 1, shears.size - 1)])
        if low < shear < high:
            try:
                result = optimize.minimize_scalar(
                    lambda trial: search.best_theta(trial)[1],
                    bracket=(low, shear, high),
                    method="golden",
                    tol=GOLDEN_XTOL,
                )
            except ValueError:
                result = None
            if result is not None and low <= result.x <= high and result.fun < values[index]:
                shear = float(result.x)
                theta = search.best_theta(shear)[0]

    sweep = search.sweep(shear, theta)
    if reached.size and not sweep.min_delta_phi_sqrt_nt <= target:
        # brentq lands within xtol of the crossing, possibly on the wrong side.
        shear, theta = grid_point
        sweep = search.sweep(shear, theta)
    params = search.params(shear, theta)
    params.phi_work = float(sweep.phi2_values[sweep.best_index])
    params.objective = sweep.min_delta_phi_sqrt_nt
    params.reached = bool(params.objective <= target)
    logger.info(
        "OAT optimum: shear=%.4f theta=%.4f dphi*sqrt(N)=%.4f reached=%s",
        shear,
        theta,
        params.objective,
        params.reached,
    )
    return params
