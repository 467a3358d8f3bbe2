"""One-dimensional multimode truncated Wigner model.

Fields have shape (..., 2, n_points) with species a on index 0 and species b
on index 1. The axial trap only shapes the initial ground state; during
mixing and separation the atoms move freely along x.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import constants, fft

from app.domain.errors import (
    AliasingError,
    ConfigError,
    ConvergenceError,
    NumericalError,
    SeparationError,
)
from app.domain.models import Grid1D, Physical1DParams, PopulationScan, SeedPopulations
from app.models.four_mode import (
    mask_unseeded_start,
    scan_statistics,
    squeezing_parameter,
    undepleted_population,
    undepleted_variance,
)
from app.wigner.core import VACUUM_QUADRATURE_SD, run_ensemble

logger = logging.getLogger(__name__)

HBAR = constants.hbar
MAX_NONLINEAR_PHASE = 0.1
ALIASING_BAND = 0.9
ALIASING_RELATIVE_LEVEL = 1e-6
ENERGY_CHECK_EVERY = 20
CALIBRATION_TOL = 1e-6
CALIBRATION_MAX_ITER = 50
# Largest fraction of atoms allowed within the window around x0.
SEPARATION_TOLERANCE = 5e-3
# Largest |share right of x0 - seeded k0 share|; atom shot noise alone stays far below.
MAX_SIDE_IMBALANCE = 0.05


# ground state -----------------------------------------------------------------


def trap_potential(grid: Grid1D, params: Physical1DParams) -> np.ndarray:
    return 0.5 * params.mass * params.trap_omega_x**2 * grid.x**2


def physical_u1d(params: Physical1DParams) -> float:
    u0 = 4.0 * math.pi * HBAR**2 * params.scattering_length / params.mass
    return u0 / (math.pi * params.r0**2)


def thomas_fermi_profile(grid: Grid1D, params: Physical1DParams, N_total: float, U_1d: float) -> np.ndarray:
    """Thomas-Fermi density (atoms per metre) holding ``N_total`` atoms."""
    if not U_1d > 0:
        raise ConfigError("invalid_interaction", "Thomas-Fermi profile needs U_1d > 0.", {"U_1d": U_1d})
    scale = 0.75 * N_total * U_1d * params.trap_omega_x * math.sqrt(0.5 * params.mass)
    mu = scale ** (2.0 / 3.0)
    return np.clip((mu - trap_potential(grid, params)) / U_1d, 0.0, None)


def thomas_fermi_chemical_potential(nt_chi: float) -> float:
    """Chemical potential whose TF profile has N_t * chi = ``nt_chi``."""
    return 1.25 * HBAR * nt_chi


def _normalise(psi: np.ndarray, grid: Grid1D, norm: float = 1.0) -> np.ndarray:
    total = float(np.sum(np.abs(psi) ** 2) * grid.dx)
    if not total > 0:
        raise ConvergenceError("empty_wavefunction", "Wavefunction norm vanished.", {})
    return psi * math.sqrt(norm / total)


def _derivative(psi: np.ndarray, grid: Grid1D) -> np.ndarray:
    return fft.ifft(1j * grid.k * fft.fft(psi))


def gp_energy(psi: np.ndarray, grid: Grid1D, params: Physical1DParams, U_1d: float) -> float:
    """Gross-Pitaevskii energy of a single-species field holding its own norm."""
    density = np.abs(psi) ** 2
    kinetic = HBAR**2 / (2.0 * params.mass) * np.abs(_derivative(psi, grid)) ** 2
    potential = trap_potential(grid, params) * density
    interaction = 0.5 * U_1d * density**2
    return float(np.sum(kinetic + potential + interaction) * grid.dx)


def _gaussian_guess(grid: Grid1D, params: Physical1DParams) -> np.ndarray:
    a_ho = math.sqrt(HBAR / (params.mass * params.trap_omega_x))
    return np.exp(-0.5 * (grid.x / a_ho) ** 2).astype(np.complex128)


def ground_state_1d(
    grid: Grid1D,
    params: Physical1DParams,
    N_total: float,
    *,
    interacting: bool = True,
    dt_imag: float = 2e-5,
    max_iter: int = 200_000,
    tol: float = 1e-10,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Real, non-negative ground state normalised to one, by imaginary-time split-step.

    The noninteracting branch starts from the harmonic-oscillator Gaussian,
    the interacting one from the Thomas-Fermi profile (or ``initial``).
    """
    if not params.trap_omega_x > 0:
        raise ConfigError("invalid_trap", "trap_omega_x must be > 0.", {"trap_omega_x": params.trap_omega_x})
    U = params.U_1d if interacting else 0.0
    if initial is not None:
        psi = np.asarray(initial, dtype=np.complex128)
    elif U > 0:
        psi = np.sqrt(thomas_fermi_profile(grid, params, N_total, U)).astype(np.complex128)
    else:
        psi = _gaussian_guess(grid, params)
    psi = _normalise(psi, grid, N_total)

    half_kinetic = np.exp(-HBAR * grid.k**2 * dt_imag / (4.0 * params.mass))
    potential = trap_potential(grid, params) / HBAR
    previous = gp_energy(psi, grid, params, U)
    for step in range(1, max_iter + 1):
        psi = fft.ifft(half_kinetic * fft.fft(psi))
        psi = psi * np.exp(-(potential + U * np.abs(psi) ** 2 / HBAR) * dt_imag)
        psi = fft.ifft(half_kinetic * fft.fft(psi))
        psi = _normalise(psi, grid, N_total)
        if step % ENERGY_CHECK_EVERY:
            continue
        energy = gp_energy(psi, grid, params, U)
        if not math.isfinite(energy):
            raise ConvergenceError("ground_state_diverged", "Imaginary-time energy is not finite.", {"step": step})
        change = abs(energy - previous) / (abs(energy) * ENERGY_CHECK_EVERY)
        if change < tol:
            logger.debug("Ground state converged after %d imaginary-time steps", step)
            return _normalise(np.abs(psi), grid).real
        previous = energy

    raise ConvergenceError(
        "ground_state_not_converged",
        f"Imaginary-time propagation did not converge in {max_iter} steps.",
        {"max_iter": max_iter, "tol": tol},
    )


def overlap_integral(psi0: np.ndarray, grid: Grid1D) -> float:
    """Integral of |psi0|^4 for a unit-normalised mode."""
    return float(np.sum(np.abs(psi0) ** 4) * grid.dx)


def calibrate_u1d(
    grid: Grid1D,
    params: Physical1DParams,
    N_total: float,
    nt_chi: float,
    *,
    interacting: bool = True,
    dt_imag: float = 2e-5,
    max_iter: int = 200_000,
) -> tuple[float, np.ndarray]:
    """Find U_1d with U_1d * N_total * int |psi0|^4 / hbar == nt_chi.

    Fixed-point iteration starting from the Thomas-Fermi estimate; each
    ground state is warm-started from the previous one.
    """
    if not nt_chi > 0 or not N_total > 0:
        raise ConfigError("invalid_calibration", "nt_chi and N_total must be > 0.", {"nt_chi": nt_chi, "N_total": N_total})
    mu = thomas_fermi_chemical_potential(nt_chi)
    U = mu**1.5 / (0.75 * N_total * params.trap_omega_x * math.sqrt(0.5 * params.mass))
    psi0: np.ndarray | None = None
    for iteration in range(CALIBRATION_MAX_ITER):
        psi0 = ground_state_1d(
            grid,
            replace(params, U_1d=U),
            N_total,
            interacting=interacting,
            dt_imag=dt_imag,
            max_iter=max_iter,
            initial=None if psi0 is None else math.sqrt(N_total) * psi0,
        )
        updated = HBAR * nt_chi / (N_total * overlap_integral(psi0, grid))
        if abs(updated - U) <= CALIBRATION_TOL * U:
            logger.info("U_1d calibrated to %.6e J*m after %d iterations", updated, iteration + 1)
            return updated, psi0
        U = updated
    raise ConvergenceError(
        "calibration_not_converged",
        "U_1d fixed-point iteration did not converge.",
        {"iterations": CALIBRATION_MAX_ITER, "U_1d": U},
    )


def resolve_interaction(
    grid: Grid1D,
    params: Physical1DParams,
    N_total: float,
    nt_chi: float,
    *,
    interacting: bool = True,
    dt_imag: float = 2e-5,
    max_iter: int = 200_000,
) -> tuple[Physical1DParams, np.ndarray]:
    """Return params with U_1d filled in and the matching unit-norm ground state."""
    if params.interaction_mode == "calibrated":
        U, psi0 = calibrate_u1d(grid, params, N_total, nt_chi, interacting=interacting, dt_imag=dt_imag, max_iter=max_iter)
        return replace(params, U_1d=U), psi0
    if params.interaction_mode == "physical":
        resolved = replace(params, U_1d=physical_u1d(params))
        psi0 = ground_state_1d(grid, resolved, N_total, interacting=interacting, dt_imag=dt_imag, max_iter=max_iter)
        return resolved, psi0
    raise ConfigError(
        "invalid_interaction_mode",
        "interaction_mode must be 'calibrated' or 'physical'.",
        {"interaction_mode": params.interaction_mode},
    )


# real-time evolution ------------------------------------------------------------


def sample_initial_fields(
    psi0: np.ndarray,
    grid: Grid1D,
    k0: float,
    seeds: SeedPopulations,
    rng: np.random.Generator,
    *,
    vacuum_noise: bool = True,
) -> np.ndarray:
    """Both species as a stationary plus a k0-boosted copy of psi0, with lattice vacuum noise."""
    alpha0, alphaK, beta0, betaK = seeds.amplitudes()
    boosted = psi0 * np.exp(1j * k0 * grid.x)
    fields = np.stack([alpha0 * psi0 + alphaK * boosted, beta0 * psi0 + betaK * boosted]).astype(np.complex128)
    if vacuum_noise:
        noise = rng.normal(0.0, VACUUM_QUADRATURE_SD, fields.shape) + 1j * rng.normal(0.0, VACUUM_QUADRATURE_SD, fields.shape)
        fields = fields + noise / math.sqrt(grid.dx)
    return fields


def total_density(fields: np.ndarray, grid: Grid1D, *, vacuum_noise: bool = True) -> np.ndarray:
    """Vacuum-corrected n_t(x) per trajectory, shape (..., n_points)."""
    density = (np.abs(fields) ** 2).sum(axis=-2)
    return density - 1.0 / grid.dx if vacuum_noise else density


def _kinetic_factor(grid: Grid1D, mass: float, duration: float) -> np.ndarray:
    return np.exp(-1j * HBAR * grid.k**2 * duration / (2.0 * mass))


def _nonlinear(fields: np.ndarray, grid: Grid1D, U_1d: float, h: float, vacuum_noise: bool) -> np.ndarray:
    n_t = total_density(fields, grid, vacuum_noise=vacuum_noise)
    return fields * np.exp(-1j * U_1d * n_t * h / HBAR)[..., np.newaxis, :]


def _check_fields(fields: np.ndarray) -> None:
    flat = fields.reshape(-1, fields.shape[-2] * fields.shape[-1]) if fields.ndim > 2 else fields.reshape(1, -1)
    bad = ~np.isfinite(flat).all(axis=1)
    if bad.any():
        index = int(np.argmax(bad))
        raise NumericalError("multimode_divergence", f"Multimode trajectory {index} diverged.", {"trajectory": index})


def step_split_fourier(
    fields: np.ndarray,
    grid: Grid1D,
    params: Physical1DParams,
    dt: float,
    nonlinearity_on: bool = True,
    *,
    vacuum_noise: bool = True,
) -> np.ndarray:
    """One Strang step: half kinetic, full nonlinear, half kinetic."""
    half = _kinetic_factor(grid, params.mass, 0.5 * dt)
    fields = fft.ifft(half * fft.fft(fields, axis=-1), axis=-1)
    if nonlinearity_on and params.U_1d != 0:
        fields = _nonlinear(fields, grid, params.U_1d, dt, vacuum_noise)
    return fft.ifft(half * fft.fft(fields, axis=-1), axis=-1)


def _check_nonlinear_step(fields: np.ndarray, grid: Grid1D, params: Physical1DParams, dt: float, vacuum_noise: bool) -> None:
    if not dt > 0:
        raise ConfigError("invalid_dt", "dt must be > 0.", {"dt": dt})
    peak = float(np.max(np.abs(total_density(fields, grid, vacuum_noise=vacuum_noise)))) if fields.size else 0.0
    phase = abs(params.U_1d) * peak * dt / HBAR
    if phase > MAX_NONLINEAR_PHASE:
        raise ConfigError(
            "multimode_dt_too_large",
            "Nonlinear phase per step must be <= 0.1 rad.",
            {"phase_per_step": phase, "dt": dt},
        )


def evolve_nonlinear(
    fields: np.ndarray,
    grid: Grid1D,
    params: Physical1DParams,
    dt: float,
    times: np.ndarray,
    *,
    vacuum_noise: bool = True,
    on_snapshot: Callable[[int, float, np.ndarray], None] | None = None,
) -> list[np.ndarray]:
    """Evolve with the mixing nonlinearity on, snapshotting at each of ``times``.

    Adjacent kinetic half-steps inside an interval are fused into one full
    step. Snapshots go to ``on_snapshot(index, t, fields)`` when given;
    otherwise they are returned as a list.
    """
    times = np.asarray(times, dtype=float)
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0):
        raise ConfigError("grid_not_monotone", "Time grid must be monotone and non-negative.", {})
    fields = np.asarray(fields, dtype=np.complex128)
    _check_nonlinear_step(fields, grid, params, dt, vacuum_noise)

    snapshots: list[np.ndarray] = []
    current = 0.0
    for index, t in enumerate(times):
        duration = t - current
        if duration > 0:
            n_steps = max(1, math.ceil(duration / dt - 1e-9))
            h = duration / n_steps
            half = _kinetic_factor(grid, params.mass, 0.5 * h)
            full = half * half
            spectrum = half * fft.fft(fields, axis=-1)
            for step in range(n_steps):
                fields = fft.ifft(spectrum, axis=-1)
                if params.U_1d != 0:
                    fields = _nonlinear(fields, grid, params.U_1d, h, vacuum_noise)
                spectrum = (full if step < n_steps - 1 else half) * fft.fft(fields, axis=-1)
            fields = fft.ifft(spectrum, axis=-1)
            _check_fields(fields)
        current = t
        if on_snapshot is not None:
            on_snapshot(index, float(t), fields)
        else:
            snapshots.append(fields.copy())
    return snapshots


def _aliasing_check(
    spectrum: np.ndarray,
    grid: Grid1D,
    mass: float,
    T: float,
    vacuum_noise: bool,
) -> None:
    # Occupation per plane-wave mode; the vacuum contributes 1/2.
    occupation = np.abs(spectrum) ** 2 * grid.dx / grid.n_points
    leading = occupation.reshape(-1, grid.n_points)
    mean_occupation = leading.mean(axis=0)
    band = np.abs(grid.k) >= ALIASING_BAND * grid.k_nyquist
    samples = leading[:, band]
    excess = float(samples.mean()) - (0.5 if vacuum_noise else 0.0)
    peak = float(mean_occupation.max())
    noise_floor = 5.0 * 0.5 / math.sqrt(samples.size) if vacuum_noise else 0.0
    velocity = HBAR * ALIASING_BAND * grid.k_nyquist / mass
    if excess > max(ALIASING_RELATIVE_LEVEL * peak, noise_floor) and velocity * T > 0.5 * grid.length:
        raise AliasingError(
            "aliasing_risk",
            "Occupied high-momentum band would wrap around the box during free propagation.",
            {"band_excess": excess, "peak": peak, "travel": velocity * T, "half_box": 0.5 * grid.length},
        )


def free_propagate(
    fields: np.ndarray,
    grid: Grid1D,
    mass: float,
    T: float,
    *,
    check_aliasing: bool = True,
    vacuum_noise: bool = True,
) -> np.ndarray:
    """Exact kinetic evolution for time T with the nonlinearity off."""
    if T < 0:
        raise ConfigError("negative_propagation_time", "Free propagation time must be >= 0.", {"T": T})
    fields = np.asarray(fields, dtype=np.complex128)
    if T == 0:
        return fields.copy()
    spectrum = fft.fft(fields, axis=-1)
    if check_aliasing:
        _aliasing_check(spectrum, grid, mass, T, vacuum_noise)
    return fft.ifft(_kinetic_factor(grid, mass, T) * spectrum, axis=-1)


# region observables ---------------------------------------------------------------


def _left_mask(grid: Grid1D, x0: float) -> np.ndarray:
    if not grid.contains(x0):
        raise ConfigError("x0_outside_grid", "Region boundary x0 lies outside the grid.", {"x0": x0})
    return grid.x < x0


def region_modes(grid: Grid1D, x0: float) -> tuple[int, int]:
    """Number of lattice modes (M_L, M_R) on each side of x0."""
    left = int(np.count_nonzero(_left_mask(grid, x0)))
    return left, grid.n_points - left


def region_sums(fields: np.ndarray, grid: Grid1D, x0: float) -> np.ndarray:
    """Raw symmetric-ordered region numbers (..., 4) in MODE_ORDER."""
    left = _left_mask(grid, x0)
    density = np.abs(fields) ** 2 * grid.dx
    sum_left = density[..., left].sum(axis=-1)
    sum_right = density[..., ~left].sum(axis=-1)
    return np.stack([sum_left[..., 0], sum_left[..., 1], sum_right[..., 0], sum_right[..., 1]], axis=-1)


def region_populations(fields: np.ndarray, grid: Grid1D, x0: float, *, vacuum_noise: bool = True) -> np.ndarray:
    """Per-trajectory corrected populations (..., 4): N_aL, N_bL, N_aR, N_bR."""
    sums = region_sums(fields, grid, x0)
    if not vacuum_noise:
        return sums
    m_left, m_right = region_modes(grid, x0)
    return sums - 0.5 * np.array([m_left, m_left, m_right, m_right], dtype=float)


def region_coherences(fields: np.ndarray, grid: Grid1D, x0: float) -> np.ndarray:
    """Per-side matrices sum_x v v^dagger dx with v = (psi_a, psi_b), shape (..., 2, 2, 2)."""
    left = _left_mask(grid, x0)
    sides = []
    for mask in (left, ~left):
        part = fields[..., mask]
        sides.append(np.einsum("...in,...jn->...ij", part, np.conj(part)) * grid.dx)
    return np.stack(sides, axis=-3)


def density_expectation(fields: np.ndarray, grid: Grid1D, *, vacuum_noise: bool = True) -> np.ndarray:
    """Ensemble-mean corrected densities, shape (2, n_points)."""
    density = (np.abs(fields) ** 2).reshape(-1, 2, grid.n_points).mean(axis=0)
    return density - 0.5 / grid.dx if vacuum_noise else density


def overlap_fraction(density: np.ndarray, grid: Grid1D, x0: float, window: float) -> float:
    """Fraction of all atoms within ``window`` of the region boundary."""
    total = np.asarray(density, dtype=float).reshape(-1, grid.n_points).sum(axis=0)
    norm = float(total.sum())
    if norm <= 0:
        return 0.0
    near = np.abs(grid.x - x0) < window
    # Clip the window sum, not each point, so vacuum noise averages out.
    return max(float(total[near].sum()), 0.0) / norm


def right_fraction(density: np.ndarray, grid: Grid1D, x0: float) -> float:
    """Share of all atoms at x >= x0."""
    total = np.asarray(density, dtype=float).reshape(-1, grid.n_points).sum(axis=0)
    norm = float(total.sum())
    if norm <= 0:
        return 0.0
    return float(total[~_left_mask(grid, x0)].sum()) / norm


# ensembles --------------------------------------------------------------------------


@dataclass(slots=True)
class MultimodeSetup:
    grid: Grid1D
    params: Physical1DParams
    psi0: np.ndarray
    seeds: SeedPopulations
    dt: float
    separation_window: float = 10e-6
    separation_tolerance: float = SEPARATION_TOLERANCE

    @property
    def chi(self) -> float:
        return self.params.U_1d * overlap_integral(self.psi0, self.grid) / HBAR

    @property
    def modes(self) -> tuple[int, int]:
        return region_modes(self.grid, self.params.x0)

    def separation_time(self, t_fwm: float) -> float:
        T = self.params.t_separation - t_fwm
        if T < 0:
            raise ConfigError(
                "t_fwm_exceeds_separation",
                "t_fwm must not exceed t_separation.",
                {"t_fwm": t_fwm, "t_separation": self.params.t_separation},
            )
        return T

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return sample_initial_fields(self.psi0, self.grid, self.params.k0, self.seeds, rng)

    @property
    def moving_share(self) -> float:
        """Seeded share of atoms at momentum k0; pair creation keeps it fixed."""
        seeds = self.seeds
        return (seeds.N_aR0 + seeds.N_bR0) / seeds.total

    def check_separation(self, density: np.ndarray) -> float:
        """Boundary overlap of the separated density, or SeparationError.

        Two tests: less than ``separation_tolerance`` of the mass within
        ``separation_window`` of x0, and the mass right of x0 within
        MAX_SIDE_IMBALANCE of the k0 share, which catches both packets
        sitting on the same side.
        """
        x0 = self.params.x0
        overlap = overlap_fraction(density, self.grid, x0, self.separation_window)
        imbalance = abs(right_fraction(density, self.grid, x0) - self.moving_share)
        if overlap >= self.separation_tolerance or imbalance >= MAX_SIDE_IMBALANCE:
            raise SeparationError(
                "wavepackets_not_separated",
                "Wave packets are not split cleanly at the region boundary.",
                {
                    "overlap": overlap,
                    "imbalance": imbalance,
                    "tolerance": self.separation_tolerance,
                    "x0": x0,
                },
            )
        return overlap


def build_setup(
    grid: Grid1D,
    params: Physical1DParams,
    seeds: SeedPopulations,
    nt_chi: float,
    *,
    dt: float = 2e-7,
    interacting: bool = True,
    dt_imag: float = 2e-5,
    max_imag_steps: int = 200_000,
    separation_window: float = 10e-6,
    separation_tolerance: float = SEPARATION_TOLERANCE,
) -> MultimodeSetup:
    resolved, psi0 = resolve_interaction(
        grid, params, seeds.total, nt_chi, interacting=interacting, dt_imag=dt_imag, max_iter=max_imag_steps
    )
    return MultimodeSetup(
        grid=grid,
        params=resolved,
        psi0=psi0,
        seeds=seeds,
        dt=dt,
        separation_window=separation_window,
        separation_tolerance=separation_tolerance,
    )


def multimode_scan(
    t_grid: np.ndarray,
    n_traj: int,
    *,
    setup: MultimodeSetup,
    rng_seed: int,
    density_times: tuple[float, ...] | list[float] = (),
    threads: int = 1,
    chunk_size: int = 8,
    nt_chi: float | None = None,
) -> tuple[PopulationScan, dict[float, np.ndarray]]:
    """Region populations and pair variances versus t_fwm, plus separated density profiles.

    All mixing times are evolved in one pass per chunk; each snapshot is then
    free-propagated to t_separation before counting atoms on each side of x0.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    density_times = [float(t) for t in density_times]
    times = np.unique(np.concatenate([t_grid, np.asarray(density_times, dtype=float)]))
    for t in times:
        setup.separation_time(float(t))
    grid = setup.grid
    params = setup.params
    density_slots = {t: index for index, t in enumerate(density_times)}
    near = np.abs(grid.x - params.x0) < setup.separation_window

    def step(batch: np.ndarray) -> dict[str, np.ndarray]:
        sums = np.empty((batch.shape[0], times.size, 4))
        densities = np.zeros((len(density_times), 2, grid.n_points))
        window = np.zeros((times.size, 2))

        def record(index: int, t: float, fields: np.ndarray) -> None:
            separated = free_propagate(fields, grid, params.mass, setup.separation_time(t))
            sums[:, index, :] = region_sums(separated, grid, params.x0)
            raw = np.abs(separated) ** 2
            window[index] = [raw[..., near].sum() * grid.dx, raw.sum() * grid.dx]
            if t in density_slots:
                densities[density_slots[t]] = raw.sum(axis=0)

        evolve_nonlinear(batch, grid, params, setup.dt, times, on_snapshot=record)
        return {"sums": sums, "densities": densities, "window": window}

    result = run_ensemble(
        step,
        setup.sample,
        n_traj,
        rng_seed,
        {"sums": lambda out: out["sums"]},
        threads=threads,
        chunk_size=chunk_size,
        accumulators={"densities": lambda out: out["densities"], "window": lambda out: out["window"]},
    )

    # Vacuum share per trajectory: half an atom per lattice mode and species.
    window = result.total_mean("window")
    overlaps = (window[:, 0] - np.count_nonzero(near)) / (window[:, 1] - grid.n_points)
    overlaps = np.clip(overlaps, 0.0, None)
    for t, overlap in zip(times, overlaps):
        if overlap >= setup.separation_tolerance:
            logger.warning("Packets not separated for t_fwm=%.3e s (overlap %.2e)", t, overlap)

    in_scan = np.searchsorted(times, t_grid)
    m_left, m_right = setup.modes
    populations, v, v_se = scan_statistics(
        result.samples["sums"][:, in_scan, :], modes=(m_left, m_left, m_right, m_right)
    )
    seeds = setup.seeds
    mask_unseeded_start(v, v_se, seeds, t_grid)
    chi = setup.chi
    r = squeezing_parameter(chi, seeds.N_aL0, seeds.N_bR0, t_grid)
    densities = result.total_mean("densities") - 0.5 / grid.dx
    logger.info("Multimode scan finished: %d times, %d trajectories", t_grid.size, n_traj)
    scan = PopulationScan(
        model="multimode1d",
        t_values=t_grid,
        nt_chi=nt_chi if nt_chi is not None else chi * seeds.total,
        populations=populations,
        v=v,
        v_se=v_se,
        N_undepleted=np.asarray(undepleted_population(seeds.N_bL0, r)),
        v_undepleted=np.asarray(undepleted_variance(seeds.N_bL0, r)),
        overlap=overlaps[in_scan],
    )
    return scan, {t: densities[index] for t, index in density_slots.items()}


@dataclass(slots=True)
class MultimodePreparation:
    coherences: np.ndarray
    vacuum_modes: tuple[int, int]
    density: np.ndarray
    overlap: float


def prepare_multimode(
    n_traj: int,
    *,
    setup: MultimodeSetup,
    t_fwm: float,
    rng_seed: int,
    apply_fwm: bool = True,
    threads: int = 1,
    chunk_size: int = 8,
) -> MultimodePreparation:
    """Separated ensemble reduced to per-side coherence matrices.

    Raises SeparationError if the packets still overlap the boundary.
    """
    grid = setup.grid
    params = setup.params if apply_fwm else replace(setup.params, U_1d=0.0)
    T = setup.separation_time(t_fwm)

    def step(batch: np.ndarray) -> np.ndarray:
        if t_fwm > 0:
            batch = evolve_nonlinear(batch, grid, params, setup.dt, np.array([t_fwm]))[0]
        return free_propagate(batch, grid, params.mass, T)

    result = run_ensemble(
        step,
        setup.sample,
        n_traj,
        rng_seed,
        {"coherences": lambda fields: region_coherences(fields, grid, params.x0)},
        threads=threads,
        chunk_size=chunk_size,
        accumulators={"density": lambda fields: (np.abs(fields) ** 2).sum(axis=0)},
    )
    density = result.total_mean("density") - 0.5 / grid.dx
    overlap = setup.check_separation(density)
    return MultimodePreparation(
        coherences=result.samples["coherences"],
        vacuum_modes=setup.modes,
        density=density,
        overlap=overlap,
    )
