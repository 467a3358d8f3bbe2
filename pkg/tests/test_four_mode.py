from __future__ import annotations

import numpy as np
import pytest

from app.domain.errors import ConfigError
from app.domain.models import FourModeParams, SeedPopulations
from app.models.four_mode import (
    chi_from_calibration,
    evolve_four_mode_tw,
    four_mode_rhs,
    four_mode_scan,
    integrate_four_mode,
    mode_invariants,
    prepare_four_mode,
    rk4_step,
    sample_four_mode,
    squeezing_parameter,
    undepleted_population,
    undepleted_variance,
)

SEEDS = SeedPopulations()
PARAMS = FourModeParams(chi=26800.0 / SEEDS.total, N_t=SEEDS.total)
DT = 2.5e-8


def test_undepleted_closed_forms_match_reference_values() -> None:
    assert undepleted_population(1e3, 1.0) == pytest.approx(3763.4, rel=1e-4)
    assert undepleted_variance(1e3, 1.0) == pytest.approx(0.266, abs=1e-3)


def test_undepleted_variance_vacuum_limit_is_one() -> None:
    assert undepleted_variance(0.0, 0.0) == 1.0
    assert undepleted_variance(1e3, 0.0) == pytest.approx(1.0)


def test_chi_from_calibration() -> None:
    assert chi_from_calibration(26800.0, 2e5) == pytest.approx(0.134)
    with pytest.raises(ConfigError):
        chi_from_calibration(26800.0, 0.0)


def test_squeezing_parameter_is_linear_in_time() -> None:
    assert squeezing_parameter(0.134, 1e5, 1e5, 1e-3) == pytest.approx(13.4)
    assert np.allclose(squeezing_parameter(0.1, 4.0, 9.0, np.array([0.0, 1.0, 2.0])), [0.0, 0.6, 1.2])


def test_single_occupied_mode_only_picks_up_a_phase() -> None:
    state = np.array([3.0 + 0.0j, 0.0, 0.0, 0.0])
    rate = 0.01 * (9.0 - 2.0)

    rhs = four_mode_rhs(state, 0.01)
    stepped = state
    for _ in range(10):
        stepped = rk4_step(stepped, 0.01, 0.1)

    assert rhs[0] == pytest.approx(-1j * rate * 3.0)
    assert np.all(rhs[1:] == 0.0)
    assert stepped[0] == pytest.approx(3.0 * np.exp(-1j * rate * 1.0), abs=1e-10)
    assert np.all(stepped[1:] == 0.0)


def test_step_size_guard_rejects_large_dt() -> None:
    state = SEEDS.amplitudes()
    with pytest.raises(ConfigError) as excinfo:
        evolve_four_mode_tw(state, PARAMS, 1e-7, 1e-6)
    assert excinfo.value.code == "four_mode_dt_too_large"


def test_evolution_conserves_species_numbers_and_pair_difference() -> None:
    rng = np.random.default_rng(5)
    states = np.stack([sample_four_mode(SEEDS, rng) for _ in range(4)])
    before = mode_invariants(states)
    after_states = evolve_four_mode_tw(states, PARAMS, DT, 0.1e-3)
    after = mode_invariants(after_states)
    pair_before = np.abs(states[:, 1]) ** 2 - np.abs(states[:, 2]) ** 2
    pair_after = np.abs(after_states[:, 1]) ** 2 - np.abs(after_states[:, 2]) ** 2

    assert np.allclose(after, before, rtol=1e-8)
    assert np.allclose(pair_after, pair_before, rtol=1e-6, atol=1e-6)


def test_integrate_lands_on_each_requested_time() -> None:
    state = SEEDS.amplitudes()[np.newaxis, :]
    times = np.array([0.0, 1e-5, 2.5e-5])
    snapshots = integrate_four_mode(state, PARAMS, DT, times)
    direct = evolve_four_mode_tw(state, PARAMS, DT, 2.5e-5)

    assert snapshots.shape == (1, 3, 4)
    assert np.allclose(snapshots[:, 0], state)
    assert np.allclose(snapshots[:, 2], direct, rtol=1e-8)


def test_integrate_rejects_decreasing_times() -> None:
    with pytest.raises(ConfigError, match="monotone"):
        integrate_four_mode(SEEDS.amplitudes(), PARAMS, DT, np.array([2e-5, 1e-5]))


def test_scan_starts_coherent_and_squeezes_the_pair_difference() -> None:
    times = np.array([0.0, 0.1e-3])
    scan = four_mode_scan(times, 800, params=PARAMS, seeds=SEEDS, dt=DT, rng_seed=3, chunk_size=200, nt_chi=26800.0)

    assert scan.nt_chi_t[1] == pytest.approx(2.68)
    assert scan.v["aR_bL"][0] == pytest.approx(1.0, abs=0.2)
    assert scan.v["aR_bL"][1] < 0.5
    # pairs are created in aR and bL
    assert scan.populations[1, 2] > scan.populations[0, 2]
    assert scan.populations[1].sum() == pytest.approx(scan.populations[0].sum(), rel=1e-3)
    assert set(scan.v) == {"aR_bL", "aL_bR", "aL_bL", "aR_bR", "aL_aR", "bL_bR"}


def test_unseeded_pair_variance_is_nan_at_start() -> None:
    seeds = SeedPopulations(N_aL0=1e5, N_aR0=0.0, N_bL0=0.0, N_bR0=1e5)
    params = FourModeParams(chi=26800.0 / seeds.total, N_t=seeds.total)
    scan = four_mode_scan(np.array([0.0]), 200, params=params, seeds=seeds, dt=DT, rng_seed=1)

    assert np.isnan(scan.v["aR_bL"][0])


def test_prepare_without_mixing_returns_initial_samples() -> None:
    kwargs = dict(params=PARAMS, seeds=SEEDS, dt=DT, t_fwm=1e-5, rng_seed=9, chunk_size=4)
    off = prepare_four_mode(8, apply_fwm=False, **kwargs)
    on = prepare_four_mode(8, **kwargs)

    assert off.shape == (8, 4)
    assert np.allclose(mode_invariants(on), mode_invariants(off), rtol=1e-8)
    assert not np.allclose(on, off)


@pytest.mark.parametrize("nt_chi_t", [0.25, 0.5])
def test_short_time_pair_population_follows_the_undepleted_solution(nt_chi_t: float) -> None:
    t = nt_chi_t / 26800.0
    states = prepare_four_mode(10_000, params=PARAMS, seeds=SEEDS, dt=DT, t_fwm=t, rng_seed=12, chunk_size=2000)
    # Species b at rest is the bL mode; its symmetric moment carries half a quantum.
    n_bL = np.abs(states[:, 2]) ** 2 - 0.5
    standard_error = np.std(n_bL, ddof=1) / np.sqrt(n_bL.size)
    r = squeezing_parameter(PARAMS.chi, SEEDS.N_aL0, SEEDS.N_bR0, t)

    assert abs(n_bL.mean() - undepleted_population(SEEDS.N_bL0, r)) < 3.0 * standard_error
