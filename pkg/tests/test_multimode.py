from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from app.domain.errors import AliasingError, ConfigError, SeparationError
from app.domain.models import Grid1D, Physical1DParams, SeedPopulations
from app.models.multimode import (
    HBAR,
    calibrate_u1d,
    density_expectation,
    evolve_nonlinear,
    free_propagate,
    gp_energy,
    ground_state_1d,
    multimode_scan,
    overlap_fraction,
    overlap_integral,
    physical_u1d,
    prepare_multimode,
    right_fraction,
    region_coherences,
    region_modes,
    region_populations,
    region_sums,
    sample_initial_fields,
    step_split_fourier,
    thomas_fermi_chemical_potential,
    thomas_fermi_profile,
)
from conftest import gaussian_mode


def _centre(density: np.ndarray, grid: Grid1D) -> float:
    return float(np.sum(grid.x * density) / np.sum(density))


def test_noninteracting_ground_state_is_the_oscillator_gaussian(small_grid, small_params) -> None:
    psi = ground_state_1d(small_grid, small_params, 1e3, interacting=False, dt_imag=1e-4, max_iter=40_000)
    expected = gaussian_mode(small_grid, small_params)

    assert np.isrealobj(psi)
    assert np.all(psi >= 0)
    assert np.sum(psi**2) * small_grid.dx == pytest.approx(1.0, rel=1e-9)
    assert np.max(np.abs(psi - expected)) < 1e-3 * expected.max()


def test_interacting_ground_state_is_wider_than_the_gaussian(small_grid, small_params) -> None:
    psi = ground_state_1d(small_grid, small_params, 2e3, dt_imag=1e-4, max_iter=40_000)
    gaussian = gaussian_mode(small_grid, small_params)

    assert overlap_integral(psi, small_grid) < overlap_integral(gaussian, small_grid)


def test_thomas_fermi_profile_holds_the_requested_atoms(small_grid, small_params) -> None:
    density = thomas_fermi_profile(small_grid, small_params, 1e3, small_params.U_1d)

    assert np.all(density >= 0.0)
    assert density[0] == 0.0 and density[-1] == 0.0
    assert np.sum(density) * small_grid.dx == pytest.approx(1e3, rel=1e-2)
    with pytest.raises(ConfigError):
        thomas_fermi_profile(small_grid, small_params, 1e3, 0.0)


def test_oscillator_ground_state_energy_is_half_a_quantum(small_grid, small_params) -> None:
    psi = gaussian_mode(small_grid, small_params)
    energy = gp_energy(psi.astype(np.complex128), small_grid, small_params, 0.0)

    assert energy == pytest.approx(0.5 * HBAR * small_params.trap_omega_x, rel=1e-6)
    assert gp_energy(psi, small_grid, small_params, small_params.U_1d) > energy


def test_calibrated_interaction_reproduces_the_mixing_rate(small_grid, small_params) -> None:
    U, psi0 = calibrate_u1d(small_grid, small_params, 2e3, 8.0, dt_imag=1e-4, max_iter=40_000)

    assert U * 2e3 * overlap_integral(psi0, small_grid) / HBAR == pytest.approx(8.0, rel=1e-9)
    assert np.sum(psi0**2) * small_grid.dx == pytest.approx(1.0, rel=1e-9)
    # psi0 is the ground state at the calibrated strength, not at the starting guess.
    direct = ground_state_1d(small_grid, replace(small_params, U_1d=U), 2e3, dt_imag=1e-4, max_iter=40_000)
    assert np.max(np.abs(psi0 - direct)) < 1e-2 * direct.max()
    with pytest.raises(ConfigError):
        calibrate_u1d(small_grid, small_params, 2e3, 0.0)


def test_density_expectation_removes_half_an_atom_per_cell(small_grid) -> None:
    fields = np.full((3, 2, small_grid.n_points), 2.0 + 0.0j)

    corrected = density_expectation(fields, small_grid)
    raw = density_expectation(fields, small_grid, vacuum_noise=False)

    assert corrected.shape == (2, small_grid.n_points)
    assert np.allclose(raw, 4.0)
    assert np.allclose(corrected, 4.0 - 0.5 / small_grid.dx)


def test_thomas_fermi_chemical_potential_relation() -> None:
    assert thomas_fermi_chemical_potential(26800.0) == pytest.approx(1.25 * HBAR * 26800.0)


def test_physical_interaction_strength_uses_transverse_area() -> None:
    params = Physical1DParams()
    expected = 4.0 * math.pi * HBAR**2 * params.scattering_length / params.mass / (math.pi * params.r0**2)
    assert physical_u1d(params) == pytest.approx(expected)


def test_initial_fields_carry_the_seed_populations(small_setup) -> None:
    fields = sample_initial_fields(
        small_setup.psi0,
        small_setup.grid,
        small_setup.params.k0,
        small_setup.seeds,
        np.random.default_rng(0),
        vacuum_noise=False,
    )
    norms = np.sum(np.abs(fields) ** 2, axis=-1) * small_setup.grid.dx

    assert fields.shape == (2, small_setup.grid.n_points)
    assert norms[0] == pytest.approx(1010.0, rel=1e-6)
    assert norms[1] == pytest.approx(1010.0, rel=1e-6)


def test_free_propagation_moves_the_boosted_packet(small_setup) -> None:
    grid = small_setup.grid
    params = small_setup.params
    boosted = small_setup.psi0 * np.exp(1j * params.k0 * grid.x)
    fields = np.stack([boosted, small_setup.psi0]).astype(np.complex128)
    T = 10e-3

    out = free_propagate(fields, grid, params.mass, T, vacuum_noise=False)
    shift = _centre(np.abs(out[0]) ** 2, grid) - _centre(np.abs(fields[0]) ** 2, grid)

    assert shift == pytest.approx(HBAR * params.k0 * T / params.mass, rel=1e-6)
    assert _centre(np.abs(out[1]) ** 2, grid) == pytest.approx(0.0, abs=1e-9)
    assert np.sum(np.abs(out) ** 2) == pytest.approx(np.sum(np.abs(fields) ** 2), rel=1e-10)


def test_free_propagation_rejects_negative_time(small_setup) -> None:
    with pytest.raises(ConfigError):
        free_propagate(np.zeros((2, 256), dtype=complex), small_setup.grid, small_setup.params.mass, -1.0)


def test_occupied_band_near_nyquist_is_an_aliasing_risk(small_setup) -> None:
    grid = small_setup.grid
    fast = small_setup.psi0 * np.exp(1j * 0.95 * grid.k_nyquist * grid.x)
    fields = np.stack([fast, np.zeros_like(fast)]).astype(np.complex128)

    with pytest.raises(AliasingError):
        free_propagate(fields, grid, small_setup.params.mass, 80e-3, vacuum_noise=False)
    free_propagate(fields, grid, small_setup.params.mass, 80e-3, vacuum_noise=False, check_aliasing=False)


def test_nonlinear_evolution_conserves_each_species(small_setup) -> None:
    fields = small_setup.sample(np.random.default_rng(1))
    snapshots = evolve_nonlinear(fields, small_setup.grid, small_setup.params, small_setup.dt, np.array([0.0, 2e-5, 5e-5]))
    norms = [np.sum(np.abs(s) ** 2, axis=-1) for s in snapshots]

    assert len(snapshots) == 3
    assert np.array_equal(snapshots[0], fields)
    assert np.allclose(norms[2], norms[0], rtol=1e-10)


def test_fused_steps_match_single_strang_steps(small_setup) -> None:
    fields = small_setup.sample(np.random.default_rng(2))
    fused = evolve_nonlinear(fields, small_setup.grid, small_setup.params, 1e-6, np.array([5e-6]))[0]
    stepped = fields
    for _ in range(5):
        stepped = step_split_fourier(stepped, small_setup.grid, small_setup.params, 1e-6)

    assert np.allclose(fused, stepped, rtol=1e-9, atol=1e-9)


def test_nonlinear_step_guard(small_setup) -> None:
    fields = small_setup.sample(np.random.default_rng(3))
    loud = replace(small_setup.params, U_1d=small_setup.params.U_1d * 1e4)

    with pytest.raises(ConfigError) as excinfo:
        evolve_nonlinear(fields, small_setup.grid, loud, 1e-6, np.array([1e-5]))
    assert excinfo.value.code == "multimode_dt_too_large"


def test_region_modes_split_the_lattice(small_grid) -> None:
    left, right = region_modes(small_grid, 10e-6)

    assert left + right == small_grid.n_points
    assert left == int(np.count_nonzero(small_grid.x < 10e-6))
    with pytest.raises(ConfigError):
        region_modes(small_grid, 1.0)


def test_vacuum_region_populations_are_corrected_to_zero(small_grid, small_params) -> None:
    empty = SeedPopulations(N_aL0=0.0, N_aR0=0.0, N_bL0=0.0, N_bR0=0.0)
    psi0 = gaussian_mode(small_grid, small_params)
    rng = np.random.default_rng(4)
    fields = np.stack([sample_initial_fields(psi0, small_grid, 0.0, empty, rng) for _ in range(400)])

    populations = region_populations(fields, small_grid, 0.0).mean(axis=0)

    assert np.allclose(populations, 0.0, atol=1.5)


def test_coherence_traces_match_region_sums(small_setup) -> None:
    fields = np.stack([small_setup.sample(np.random.default_rng(i)) for i in range(3)])
    coherences = region_coherences(fields, small_setup.grid, small_setup.params.x0)
    sums = region_sums(fields, small_setup.grid, small_setup.params.x0)

    assert coherences.shape == (3, 2, 2, 2)
    assert np.allclose(np.real(coherences[:, 0, 0, 0]), sums[:, 0])
    assert np.allclose(np.real(coherences[:, 0, 1, 1]), sums[:, 1])
    assert np.allclose(np.real(coherences[:, 1, 0, 0]), sums[:, 2])
    assert np.allclose(coherences, np.conj(np.swapaxes(coherences, -1, -2)))


def test_overlap_fraction_detects_density_at_the_boundary(small_grid) -> None:
    far = np.exp(-((small_grid.x + 50e-6) / 5e-6) ** 2)
    near = np.exp(-((small_grid.x - 29e-6) / 5e-6) ** 2)

    assert overlap_fraction(np.stack([far, far]), small_grid, 29e-6, 2e-6) < 1e-12
    assert overlap_fraction(np.stack([near, near]), small_grid, 29e-6, 2e-6) > 0.1
    assert overlap_fraction(np.zeros((2, small_grid.n_points)), small_grid, 0.0, 2e-6) == 0.0


def test_scan_reports_separated_populations_and_densities(small_setup) -> None:
    times = np.array([0.0, 5e-5])
    scan, densities = multimode_scan(
        times,
        8,
        setup=small_setup,
        rng_seed=11,
        density_times=[5e-5],
        chunk_size=4,
    )

    assert scan.model == "multimode1d"
    assert scan.populations.shape == (2, 4)
    assert scan.populations[0].sum() == pytest.approx(small_setup.seeds.total, rel=0.05)
    # Eight trajectories leave vacuum noise of a few 1e-4 in the boundary window.
    assert np.all(scan.overlap < 1e-2)
    assert set(densities) == {5e-5}
    assert densities[5e-5].shape == (2, small_setup.grid.n_points)


def test_scan_is_identical_across_thread_counts(small_setup) -> None:
    kwargs = dict(setup=small_setup, rng_seed=5, chunk_size=2)
    single, _ = multimode_scan(np.array([2e-5]), 6, threads=1, **kwargs)
    threaded, _ = multimode_scan(np.array([2e-5]), 6, threads=3, **kwargs)

    assert np.array_equal(single.populations, threaded.populations)
    assert np.array_equal(single.v["aR_bL"], threaded.v["aR_bL"], equal_nan=True)


def test_prepare_returns_per_side_coherences(small_setup) -> None:
    small_setup.separation_tolerance = 1e-2
    prepared = prepare_multimode(6, setup=small_setup, t_fwm=2e-5, rng_seed=3, chunk_size=3)

    assert prepared.coherences.shape == (6, 2, 2, 2)
    assert prepared.vacuum_modes == small_setup.modes
    assert prepared.overlap < 1e-2
    assert prepared.density.shape == (2, small_setup.grid.n_points)


def test_prepare_refuses_unseparated_packets(small_setup) -> None:
    # Both packets are still near x = 0, far from the boundary at 29 um.
    small_setup.params = replace(small_setup.params, t_separation=1e-4)

    with pytest.raises(SeparationError) as excinfo:
        prepare_multimode(4, setup=small_setup, t_fwm=2e-5, rng_seed=3, chunk_size=4)
    assert excinfo.value.details["overlap"] < small_setup.separation_tolerance
    assert excinfo.value.details["imbalance"] > 0.4


def test_separation_check_needs_one_packet_per_side(small_setup) -> None:
    grid = small_setup.grid
    x0 = small_setup.params.x0

    def packet(centre: float) -> np.ndarray:
        return 505.0 * np.exp(-(((grid.x - centre) / 5e-6) ** 2)) / (math.sqrt(math.pi) * 5e-6)

    split = np.stack([packet(-20e-6), packet(70e-6)])
    same_side = np.stack([packet(50e-6), packet(75e-6)])

    assert right_fraction(split, grid, x0) == pytest.approx(0.5, abs=1e-6)
    assert small_setup.moving_share == pytest.approx(0.5)
    assert small_setup.check_separation(split) < 1e-6
    assert right_fraction(same_side, grid, x0) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(SeparationError) as excinfo:
        small_setup.check_separation(same_side)
    assert excinfo.value.details["imbalance"] == pytest.approx(0.5, abs=1e-6)


def test_mixing_halo_near_the_boundary_is_tolerated(small_setup) -> None:
    grid = small_setup.grid
    x0 = small_setup.params.x0
    packets = np.exp(-(((grid.x + 20e-6) / 5e-6) ** 2)) + np.exp(-(((grid.x - 78e-6) / 5e-6) ** 2))
    # Pair continuum between the packets, symmetric about x0.
    halo = np.where(np.abs(grid.x - x0) < 49e-6, 2e-3, 0.0)
    density = np.stack([packets + halo, packets + halo])

    overlap = small_setup.check_separation(density)

    assert 1e-4 < overlap < small_setup.separation_tolerance


def test_mixing_time_beyond_separation_is_rejected(small_setup) -> None:
    with pytest.raises(ConfigError) as excinfo:
        small_setup.separation_time(1.0)
    assert excinfo.value.code == "t_fwm_exceeds_separation"


def test_interacting_ground_state_peak_matches_thomas_fermi(small_grid, small_params) -> None:
    psi = ground_state_1d(small_grid, small_params, 2e3, dt_imag=1e-4, max_iter=40_000)
    profile = thomas_fermi_profile(small_grid, small_params, 2e3, small_params.U_1d)

    assert 2e3 * float(np.max(psi**2)) == pytest.approx(float(profile.max()), rel=0.02)


def _mixed_then_separated(n_points: int, dt: float, small_params, small_seeds, *, t_fwm: float = 0.3e-3) -> np.ndarray:
    """Noise-free mixing at N_t chi = 8000 / s, then 40 ms of flight; region populations."""
    grid = Grid1D(n_points=n_points, length=200e-6)
    psi0 = gaussian_mode(grid, small_params)
    U = 8000.0 * HBAR / (small_seeds.total * overlap_integral(psi0, grid))
    params = replace(small_params, U_1d=U)
    fields = sample_initial_fields(psi0, grid, params.k0, small_seeds, np.random.default_rng(0), vacuum_noise=False)
    mixed = evolve_nonlinear(fields, grid, params, dt, np.array([t_fwm]), vacuum_noise=False)[0]
    # Fast nonresonant harmonics wrap the same way on both grids.
    flown = free_propagate(mixed, grid, params.mass, 40e-3, vacuum_noise=False, check_aliasing=False)
    return region_populations(flown, grid, params.x0, vacuum_noise=False)


def test_mixing_converges_in_the_time_step(small_params, small_seeds) -> None:
    coarse = _mixed_then_separated(512, 2e-6, small_params, small_seeds)
    fine = _mixed_then_separated(512, 1e-6, small_params, small_seeds)

    # Seeded pair modes grow well beyond their 10 atoms.
    assert fine[1] > 20.0
    assert np.allclose(coarse, fine, rtol=1e-3)


@pytest.mark.slow
def test_mixing_converges_in_the_grid(small_params, small_seeds) -> None:
    coarse = _mixed_then_separated(512, 1e-6, small_params, small_seeds)
    fine = _mixed_then_separated(1024, 1e-6, small_params, small_seeds)

    assert np.allclose(coarse, fine, rtol=1e-3)


def test_species_norms_survive_mixing_and_a_long_flight(small_params, small_seeds) -> None:
    grid = Grid1D(n_points=512, length=200e-6)
    psi0 = gaussian_mode(grid, small_params)
    fields = sample_initial_fields(psi0, grid, small_params.k0, small_seeds, np.random.default_rng(0), vacuum_noise=False)
    before = np.sum(np.abs(fields) ** 2, axis=-1)

    mixed = evolve_nonlinear(fields, grid, small_params, 1e-6, np.array([0.12e-3]), vacuum_noise=False)[0]
    flown = free_propagate(mixed, grid, small_params.mass, 70e-3, vacuum_noise=False)

    assert np.allclose(np.sum(np.abs(flown) ** 2, axis=-1), before, rtol=1e-8, atol=0.0)
