"""Four-mode model: undepleted-pump closed forms and the truncated Wigner ODEs.

State arrays have a trailing axis of length four ordered
(alpha0, alphaK, beta0, betaK), i.e. modes (aL, aR, bL, bR).
"""

from __future__ import annotations

import logging
import math

import numpy as np

from app.domain.errors import ConfigError, NumericalError
from app.domain.models import (
    MODE_ORDER,
    VARIANCE_PAIRS,
    FourModeParams,
    PopulationScan,
    SeedPopulations,
    pair_key,
)
from app.wigner.core import (
    jackknife_standard_error,
    number_difference_variance_or_nan,
    run_ensemble,
    sample_coherent,
)

logger = logging.getLogger(__name__)

STATE_MODES: tuple[str, ...] = ("aL", "aR", "bL", "bR")
# Reorders a state-ordered axis into MODE_ORDER.
TO_MODE_ORDER = [STATE_MODES.index(name) for name in MODE_ORDER]
MAX_PHASE_PER_STEP = 1e-3


def undepleted_population(N0: float, r: float | np.ndarray) -> float | np.ndarray:
    return (N0 + 0.5) * np.cosh(2.0 * np.asarray(r, dtype=float)) - 0.5


def undepleted_variance(N0: float, r: float | np.ndarray) -> float | np.ndarray:
    """Squeezed-pair variance; the vacuum 0/0 limit is taken as 1."""
    r_arr = np.asarray(r, dtype=float)
    denominator = (2.0 * N0 + 1.0) * np.cosh(2.0 * r_arr) - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(denominator > 0, 2.0 * N0 / np.where(denominator > 0, denominator, 1.0), 1.0)
    return float(value) if value.ndim == 0 else value


def squeezing_parameter(chi: float, N_aL0: float, N_bR0: float, t: float | np.ndarray) -> float | np.ndarray:
    return chi * math.sqrt(N_aL0) * math.sqrt(N_bR0) * np.asarray(t, dtype=float)


def chi_from_calibration(nt_chi: float, N_t: float) -> float:
    if not N_t > 0:
        raise ConfigError("invalid_total_number", "N_t must be > 0.", {"N_t": N_t})
    return nt_chi / N_t


def sample_four_mode(seeds: SeedPopulations, rng: np.random.Generator, *, vacuum_noise: bool = True) -> np.ndarray:
    means = seeds.amplitudes()
    if not vacuum_noise:
        return means
    return sample_coherent(means, rng)


def four_mode_rhs(state: np.ndarray, chi: float) -> np.ndarray:
    """Interaction-picture time derivative; trapping frequencies are factored out."""
    a0, ak, b0, bk = state[..., 0], state[..., 1], state[..., 2], state[..., 3]
    total = (np.abs(state) ** 2).sum(axis=-1) - 2.0
    out = np.empty_like(state)
    out[..., 0] = total * a0 + np.conj(bk) * b0 * ak
    out[..., 1] = total * ak + np.conj(b0) * bk * a0
    out[..., 2] = total * b0 + np.conj(ak) * a0 * bk
    out[..., 3] = total * bk + np.conj(a0) * ak * b0
    return -1j * chi * out


def rk4_step(state: np.ndarray, chi: float, h: float) -> np.ndarray:
    k1 = four_mode_rhs(state, chi)
    k2 = four_mode_rhs(state + 0.5 * h * k1, chi)
    k3 = four_mode_rhs(state + 0.5 * h * k2, chi)
    k4 = four_mode_rhs(state + h * k3, chi)
    return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_finite(state: np.ndarray) -> None:
    flat = state.reshape(-1, state.shape[-1]) if state.ndim > 1 else state.reshape(1, -1)
    bad = ~np.isfinite(flat).all(axis=1)
    if bad.any():
        index = int(np.argmax(bad))
        raise NumericalError(
            "four_mode_divergence",
            f"Four-mode trajectory {index} diverged.",
            {"trajectory": index},
        )


def _check_step(params: FourModeParams, dt: float) -> None:
    if not dt > 0:
        raise ConfigError("invalid_dt", "dt must be > 0.", {"dt": dt})
    if params.chi * params.N_t * dt > MAX_PHASE_PER_STEP:
        raise ConfigError(
            "four_mode_dt_too_large",
            "chi * N_t * dt must be <= 1e-3.",
            {"chi_nt_dt": params.chi * params.N_t * dt},
        )


def _integrate(state: np.ndarray, chi: float, dt: float, duration: float) -> np.ndarray:
    if duration <= 0:
        return state
    n_steps = max(1, math.ceil(duration / dt - 1e-9))
    h = duration / n_steps
    for step in range(n_steps):
        state = rk4_step(state, chi, h)
        if step % 256 == 255:
            _check_finite(state)
    _check_finite(state)
    return state


def _frequencies(params: FourModeParams) -> np.ndarray:
    return np.array([params.omega0, params.omegaK, params.omega0, params.omegaK])


def evolve_four_mode_tw(state: np.ndarray, params: FourModeParams, dt: float, t_end: float) -> np.ndarray:
    """Integrate the four-mode Wigner ODEs with fixed-step RK4 from 0 to ``t_end``.

    The last step is shortened so the run lands on ``t_end``; returned
    amplitudes carry the free e^{-i omega t} phases again.
    """
    _check_step(params, dt)
    state = np.asarray(state, dtype=np.complex128)
    evolved = _integrate(state.copy(), params.chi, dt, t_end)
    return evolved * np.exp(-1j * _frequencies(params) * t_end)


def integrate_four_mode(states: np.ndarray, params: FourModeParams, dt: float, times: np.ndarray) -> np.ndarray:
    """Single pass through a monotone time grid; returns (..., n_times, 4)."""
    _check_step(params, dt)
    times = np.asarray(times, dtype=float)
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0):
        raise ConfigError("grid_not_monotone", "Time grid must be monotone and non-negative.", {})

    state = np.asarray(states, dtype=np.complex128).copy()
    snapshots = np.empty(state.shape[:-1] + (times.size, 4), dtype=np.complex128)
    current = 0.0
    omegas = _frequencies(params)
    for index, t in enumerate(times):
        state = _integrate(state, params.chi, dt, t - current)
        current = t
        snapshots[..., index, :] = state * np.exp(-1j * omegas * t)
    return snapshots


def mode_invariants(state: np.ndarray) -> np.ndarray:
    """Species-a, species-b and momentum-class-k0 Wigner numbers per trajectory."""
    sq = np.abs(state) ** 2
    return np.stack([sq[..., 0] + sq[..., 1], sq[..., 2] + sq[..., 3], sq[..., 1] + sq[..., 3]], axis=-1)


def scan_statistics(
    abs_sq: np.ndarray,
    *,
    modes: tuple[float, float, float, float] = (1, 1, 1, 1),
) -> tuple[np.ndarray, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Populations and pair variances from (n_traj, n_times, 4) symmetric samples in MODE_ORDER."""
    populations = abs_sq.mean(axis=0) - 0.5 * np.asarray(modes)
    v: dict[str, np.ndarray] = {}
    v_se: dict[str, np.ndarray] = {}
    for pair in VARIANCE_PAIRS:
        i, j = MODE_ORDER.index(pair[0]), MODE_ORDER.index(pair[1])
        key = pair_key(pair)

        def estimator(ni: np.ndarray, nj: np.ndarray, mi: float = modes[i], mj: float = modes[j]) -> np.ndarray:
            return number_difference_variance_or_nan(ni, nj, modes_i=mi, modes_j=mj)

        v[key] = estimator(abs_sq[..., i], abs_sq[..., j])
        v_se[key] = jackknife_standard_error(estimator, abs_sq[..., i], abs_sq[..., j])
    return populations, v, v_se


def mask_unseeded_start(
    v: dict[str, np.ndarray],
    v_se: dict[str, np.ndarray],
    seeds: SeedPopulations,
    t_grid: np.ndarray,
) -> None:
    """Set v to NaN at t = 0 for pairs whose two modes start empty."""
    start = np.asarray(t_grid) == 0
    if not start.any():
        return
    seeded = dict(zip(MODE_ORDER, (seeds.N_aL0, seeds.N_bL0, seeds.N_aR0, seeds.N_bR0)))
    for pair in VARIANCE_PAIRS:
        if seeded[pair[0]] + seeded[pair[1]] > 0:
            continue
        key = pair_key(pair)
        v[key] = np.where(start, np.nan, v[key])
        v_se[key] = np.where(start, np.nan, v_se[key])


def four_mode_scan(
    t_grid: np.ndarray,
    n_traj: int,
    *,
    params: FourModeParams,
    seeds: SeedPopulations,
    dt: float,
    rng_seed: int,
    threads: int = 1,
    chunk_size: int = 64,
    nt_chi: float | None = None,
) -> PopulationScan:
    """Populations and all six pair variances versus t_fwm."""
    t_grid = np.asarray(t_grid, dtype=float)
    result = run_ensemble(
        lambda batch: integrate_four_mode(batch, params, dt, t_grid),
        lambda rng: sample_four_mode(seeds, rng),
        n_traj,
        rng_seed,
        {"abs_sq": lambda snaps: (np.abs(snaps) ** 2)[..., TO_MODE_ORDER]},
        threads=threads,
        chunk_size=chunk_size,
    )
    populations, v, v_se = scan_statistics(result.samples["abs_sq"])
    mask_unseeded_start(v, v_se, seeds, t_grid)
    r = squeezing_parameter(params.chi, seeds.N_aL0, seeds.N_bR0, t_grid)
    logger.info("Four-mode scan finished: %d times, %d trajectories", t_grid.size, n_traj)
    return PopulationScan(
        model="fourmode",
        t_values=t_grid,
        nt_chi=nt_chi if nt_chi is not None else params.chi * params.N_t,
        populations=populations,
        v=v,
        v_se=v_se,
        N_undepleted=np.asarray(undepleted_population(seeds.N_bL0, r)),
        v_undepleted=np.asarray(undepleted_variance(seeds.N_bL0, r)),
    )


def prepare_four_mode(
    n_traj: int,
    *,
    params: FourModeParams,
    seeds: SeedPopulations,
    dt: float,
    t_fwm: float,
    rng_seed: int,
    apply_fwm: bool = True,
    threads: int = 1,
    chunk_size: int = 64,
) -> np.ndarray:
    """Per-trajectory amplitudes after the mixing stage, shape (n_traj, 4)."""

    def step(batch: np.ndarray) -> np.ndarray:
        if not apply_fwm or t_fwm <= 0:
            return batch
        return evolve_four_mode_tw(batch, params, dt, t_fwm)

    result = run_ensemble(
        step,
        lambda rng: sample_four_mode(seeds, rng),
        n_traj,
        rng_seed,
        {"state": lambda states: states},
        threads=threads,
        chunk_size=chunk_size,
    )
    return result.samples["state"]
