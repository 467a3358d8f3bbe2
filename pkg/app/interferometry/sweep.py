from __future__ import annotations

import itertools
import logging
import math

import numpy as np

from app.domain.errors import ConfigError
from app.domain.models import TWO_PI, PulseSequence, SweepResult
from app.interferometry.pulses import (
    PreparedEnsemble,
    apply_phase,
    apply_pulse,
    balance_phase,
    coherence_populations,
    pre_readout,
    readout,
    signal_from_coherences,
    signal_variance,
)

logger = logging.getLogger(__name__)

FLAT_SLOPE_TOLERANCE = 1e-12


def _periodic_slope(phi: np.ndarray, values: np.ndarray) -> np.ndarray:
    ahead = np.roll(values, -1)
    behind = np.roll(values, 1)
    spacing = np.mod(np.roll(phi, -1) - np.roll(phi, 1), TWO_PI)
    return (ahead - behind) / spacing


def sensitivity_sweep(
    prepared: PreparedEnsemble,
    phi2_grid: np.ndarray,
    seq_base: PulseSequence,
) -> SweepResult:
    """Mean signal, corrected variance and phase sensitivity over phi2.

    ``phi2_grid`` must sample [0, 2 pi) uniformly; the derivative of <S>
    wraps around the ends.
    """
    phi2 = np.asarray(phi2_grid, dtype=float)
    if phi2.size < 3:
        raise ConfigError("phi2_grid_too_small", "phi2 sweep needs at least 3 points.", {"n": phi2.size})
    if prepared.n_traj < 2:
        raise ConfigError("too_few_trajectories", "A sweep needs at least two trajectories.", {"n_traj": prepared.n_traj})

    staged = pre_readout(prepared.coherences, seq_base)
    column = phi2[:, np.newaxis]
    final = readout(staged, column, column + seq_base.phi2_offset_R)
    signal = signal_from_coherences(final)
    populations = coherence_populations(final, prepared.vacuum_modes).mean(axis=1)
    var_S = np.asarray(signal_variance(signal, prepared.vacuum_modes, axis=1))
    return summarize_sweep(phi2, signal.mean(axis=1), var_S, populations)


def summarize_sweep(
    phi2: np.ndarray,
    mean_S: np.ndarray,
    var_S: np.ndarray,
    populations: np.ndarray,
) -> SweepResult:
    """Sensitivity and visibility from per-phase signal moments and mean populations (n_phi, 4)."""
    if np.any(var_S < 0):
        logger.warning("Corrected V(S) negative at %d phases; clipped to 0", int(np.count_nonzero(var_S < 0)))
        var_S = np.clip(var_S, 0.0, None)

    N_t = float(populations.sum(axis=1).mean())
    slope = np.abs(_periodic_slope(phi2, mean_S))
    flat = slope < FLAT_SLOPE_TOLERANCE * max(abs(N_t), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta_phi = np.where(flat, np.inf, np.sqrt(var_S) / np.where(flat, 1.0, slope))
    flagged = [int(i) for i in np.flatnonzero(flat)]
    if flagged:
        logger.info("Flat signal slope at %d of %d phases", len(flagged), phi2.size)

    n_aL = populations[:, 0]
    aL_span = float(n_aL.max() + n_aL.min())
    return SweepResult(
        phi2_values=phi2,
        mean_S=mean_S,
        var_S=var_S,
        delta_phi=delta_phi,
        populations=populations,
        N_t=N_t,
        visibility=float((mean_S.max() - mean_S.min()) / (2.0 * N_t)) if N_t > 0 else float("nan"),
        visibility_aL=float((n_aL.max() - n_aL.min()) / aL_span) if aL_span > 0 else float("nan"),
        flagged=flagged,
    )


def delta_phi_at(sweep: SweepResult, phi: float) -> float:
    """Delta phi * sqrt(N_t) at the sweep point nearest ``phi`` on the circle."""
    distance = np.abs(np.angle(np.exp(1j * (sweep.phi2_values - phi))))
    return float(sweep.delta_phi_sqrt_nt[int(np.argmin(distance))])


def _stage_roots(coherences: np.ndarray) -> list[tuple[float, float]]:
    left = balance_phase(coherences, "L").phi
    right = balance_phase(coherences, "R").phi
    return [
        (left + shift_left, right + shift_right)
        for shift_left, shift_right in itertools.product((0.0, math.pi), repeat=2)
    ]


def candidate_sequences(prepared: PreparedEnsemble, *, phi2_offset_R: float = math.pi) -> list[PulseSequence]:
    """All 16 root choices for the two balancing stages, in a fixed order."""
    mean = prepared.mean_coherences()
    candidates = []
    for phi0L, phi0R in _stage_roots(mean):
        after_first = apply_pulse(apply_phase(mean, phi0L, phi0R))
        for phi1L, phi1R in _stage_roots(after_first):
            candidates.append(PulseSequence(phi0L, phi0R, phi1L, phi1R, 0.0, phi2_offset_R))
    return candidates


def _score(sweep: SweepResult) -> float:
    value = sweep.min_delta_phi_sqrt_nt
    return value if math.isfinite(value) else math.inf


def prepare_sequence(
    prepared: PreparedEnsemble,
    phi2_grid: np.ndarray,
    *,
    phi2_offset_R: float = math.pi,
) -> tuple[PulseSequence, SweepResult]:
    """Balance both stages and keep the root combination with the best sensitivity.

    Each balancing stage has roots phi and phi + pi per side; the choice decides
    whether the first pulse maps the squeezed or the anti-squeezed quadrature
    onto S, so all 16 combinations are swept.
    """
    best: tuple[PulseSequence, SweepResult] | None = None
    for candidate in candidate_sequences(prepared, phi2_offset_R=phi2_offset_R):
        sweep = sensitivity_sweep(prepared, phi2_grid, candidate)
        if best is None or _score(sweep) < _score(best[1]):
            best = (candidate, sweep)
    assert best is not None
    seq, sweep = best
    seq = seq.with_phi2(float(sweep.phi2_values[sweep.best_index]))
    logger.info("Selected pulse sequence with min dphi*sqrt(N_t)=%.4f", sweep.min_delta_phi_sqrt_nt)
    return seq, sweep
