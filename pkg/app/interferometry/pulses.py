"""Local phase shifts, pi/2 coupling pulses and the interferometric signal.

The beam splitter convention is a' = (a - i b)/sqrt(2), b' = (-i a + b)/sqrt(2)
with phase shifts applied to species b. Every pulse and phase acts locally on
one side (left/right packet), so a prepared ensemble is fully described by the
per-side 2x2 matrices rho = sum_x v v^dagger dx with v = (psi_a, psi_b).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from app.domain.errors import ConfigError, SeparationError
from app.domain.models import TWO_PI, Grid1D, PulseSequence
from app.models.multimode import (
    SEPARATION_TOLERANCE,
    MultimodePreparation,
    density_expectation,
    overlap_fraction,
    region_coherences,
    region_modes,
)

logger = logging.getLogger(__name__)

SIDES = ("L", "R")
BALANCE_GRID_POINTS = 256
BALANCE_XTOL = 1e-6
FLAT_TOLERANCE = 1e-12
PULSE_MATRIX = np.array([[1.0, -1j], [-1j, 1.0]]) / math.sqrt(2.0)


def _side_index(side: str) -> int:
    if side not in SIDES:
        raise ConfigError("invalid_side", "side must be 'L' or 'R'.", {"side": side})
    return SIDES.index(side)


# amplitude forms --------------------------------------------------------------------


def beam_splitter(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """50/50 coupling of two amplitudes (or co-located field values)."""
    return (a - 1j * b) / math.sqrt(2.0), (-1j * a + b) / math.sqrt(2.0)


def pulse(state: np.ndarray, *, fields: bool = False) -> np.ndarray:
    """Pi/2 pulse on both sides of a four-mode state (..., 4) or a field pair (..., 2, n)."""
    state = np.asarray(state, dtype=np.complex128)
    out = state.copy()
    if fields:
        out[..., 0, :], out[..., 1, :] = beam_splitter(state[..., 0, :], state[..., 1, :])
        return out
    # (alpha0, alphaK, beta0, betaK): left couples 0<->2, right 1<->3.
    out[..., 0], out[..., 2] = beam_splitter(state[..., 0], state[..., 2])
    out[..., 1], out[..., 3] = beam_splitter(state[..., 1], state[..., 3])
    return out


def phase_shift(
    state: np.ndarray,
    side: str,
    phi: float,
    *,
    x0: float | None = None,
    grid: Grid1D | None = None,
    window: float = 10e-6,
    tolerance: float = SEPARATION_TOLERANCE,
) -> np.ndarray:
    """Multiply species b on one side by e^{i phi}.

    Field pairs need ``grid`` and ``x0``; they must be separated at x0.
    """
    index = _side_index(side)
    state = np.asarray(state, dtype=np.complex128)
    out = state.copy()
    if grid is None:
        out[..., 2 + index] *= np.exp(1j * phi)
        return out
    if x0 is None:
        raise ConfigError("missing_boundary", "Field phase shifts need the region boundary x0.", {})
    overlap = overlap_fraction(density_expectation(state, grid), grid, x0, window)
    if overlap >= tolerance:
        raise SeparationError(
            "wavepackets_not_separated",
            "Local phase shift needs spatially separated packets.",
            {"overlap": overlap, "tolerance": tolerance},
        )
    mask = grid.x < x0 if side == "L" else grid.x >= x0
    out[..., 1, mask] *= np.exp(1j * phi)
    return out


# coherence-matrix forms ---------------------------------------------------------------


def coherences_from_four_mode(states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=np.complex128)
    left = np.stack([states[..., 0], states[..., 2]], axis=-1)
    right = np.stack([states[..., 1], states[..., 3]], axis=-1)
    v = np.stack([left, right], axis=-2)
    return v[..., :, np.newaxis] * np.conj(v[..., np.newaxis, :])


def apply_phase(coherences: np.ndarray, phiL: float | np.ndarray, phiR: float | np.ndarray) -> np.ndarray:
    """rho -> P rho P^dagger with P = diag(1, e^{i phi}) per side.

    Phases broadcast against the leading axes of ``coherences``.
    """
    phases = np.stack(np.broadcast_arrays(np.asarray(phiL, dtype=float), np.asarray(phiR, dtype=float)), axis=-1)
    factor = np.exp(1j * phases)
    out = np.array(np.broadcast_to(coherences, np.broadcast_shapes(coherences.shape, factor.shape + (2, 2))))
    out[..., 1, 0] = out[..., 1, 0] * factor
    out[..., 0, 1] = out[..., 0, 1] * np.conj(factor)
    return out


def apply_pulse(coherences: np.ndarray) -> np.ndarray:
    return PULSE_MATRIX @ coherences @ PULSE_MATRIX.conj().T


def coherence_populations(coherences: np.ndarray, vacuum_modes: tuple[float, float]) -> np.ndarray:
    """Corrected populations (..., 4) in MODE_ORDER from per-side matrices."""
    diag = np.real(np.diagonal(coherences, axis1=-2, axis2=-1))
    m_left, m_right = vacuum_modes
    return np.stack(
        [
            diag[..., 0, 0] - 0.5 * m_left,
            diag[..., 0, 1] - 0.5 * m_left,
            diag[..., 1, 0] - 0.5 * m_right,
            diag[..., 1, 1] - 0.5 * m_right,
        ],
        axis=-1,
    )


def side_imbalance(coherences: np.ndarray) -> np.ndarray:
    """N_a - N_b per side, shape (..., 2); vacuum shares cancel."""
    return np.real(coherences[..., 0, 0] - coherences[..., 1, 1])


@dataclass(slots=True)
class PreparedEnsemble:
    model: str
    coherences: np.ndarray
    vacuum_modes: tuple[float, float]
    t_fwm: float
    rng_seed: int
    overlap: float = 0.0
    density: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.coherences = np.asarray(self.coherences, dtype=np.complex128)
        if self.coherences.ndim != 4 or self.coherences.shape[1:] != (2, 2, 2):
            raise ConfigError(
                "invalid_coherences",
                "Coherences must have shape (n_traj, 2, 2, 2).",
                {"shape": self.coherences.shape},
            )

    @classmethod
    def from_four_mode(cls, states: np.ndarray, *, t_fwm: float = 0.0, rng_seed: int = 0) -> "PreparedEnsemble":
        return cls("fourmode", coherences_from_four_mode(states), (1.0, 1.0), t_fwm, rng_seed)

    @classmethod
    def from_fields(
        cls,
        fields: np.ndarray,
        grid: Grid1D,
        x0: float,
        *,
        t_fwm: float = 0.0,
        rng_seed: int = 0,
        window: float = 10e-6,
    ) -> "PreparedEnsemble":
        density = density_expectation(fields, grid)
        return cls(
            "multimode1d",
            region_coherences(fields, grid, x0),
            tuple(float(m) for m in region_modes(grid, x0)),
            t_fwm,
            rng_seed,
            overlap=overlap_fraction(density, grid, x0, window),
            density=density,
        )

    @classmethod
    def from_multimode(cls, prepared: MultimodePreparation, *, t_fwm: float, rng_seed: int) -> "PreparedEnsemble":
        return cls(
            "multimode1d",
            prepared.coherences,
            tuple(float(m) for m in prepared.vacuum_modes),
            t_fwm,
            rng_seed,
            overlap=prepared.overlap,
            density=prepared.density,
        )

    @property
    def n_traj(self) -> int:
        return self.coherences.shape[0]

    def populations(self) -> np.ndarray:
        return coherence_populations(self.coherences, self.vacuum_modes)

    def mean_coherences(self) -> np.ndarray:
        return self.coherences.mean(axis=0)


# balancing ------------------------------------------------------------------------------


@dataclass(slots=True)
class PhaseBalance:
    phi: float
    flat: bool = False
    residual: float = 0.0


def balance_phase(prepared: PreparedEnsemble | np.ndarray, side: str) -> PhaseBalance:
    """Phase on species b of ``side`` that zeroes the mean imbalance after the next pulse.

    The root is returned in [0, pi); phi + pi is the other root.
    """
    index = _side_index(side)
    coherences = prepared.mean_coherences() if isinstance(prepared, PreparedEnsemble) else np.asarray(prepared)
    if coherences.ndim > 3:
        coherences = coherences.reshape(-1, 2, 2, 2).mean(axis=0)
    rho = coherences[index]

    def objective(phi: float) -> float:
        trial = apply_pulse(apply_phase(coherences, phi if index == 0 else 0.0, phi if index == 1 else 0.0))
        return float(side_imbalance(trial)[index] ** 2)

    grid = math.pi * np.arange(BALANCE_GRID_POINTS) / BALANCE_GRID_POINTS
    values = np.array([objective(phi) for phi in grid])
    scale = float(np.real(np.trace(rho))) ** 2
    if values.max() - values.min() <= FLAT_TOLERANCE * max(scale, 1.0):
        logger.warning("Balancing objective on side %s is flat; using phi=0", side)
        return PhaseBalance(phi=0.0, flat=True, residual=float(values[0]))

    best = int(np.argmin(values))
    step = grid[1] - grid[0]
    try:
        result = optimize.minimize_scalar(
            objective,
            bracket=(grid[best] - step, grid[best], grid[best] + step),
            method="golden",
            tol=BALANCE_XTOL,
        )
        phi, residual = float(result.x), float(result.fun)
    except ValueError:
        # grid point already sits on the root to machine precision
        phi, residual = float(grid[best]), float(values[best])
    phi %= math.pi
    if math.isclose(phi, math.pi, abs_tol=BALANCE_XTOL):
        phi = 0.0
    return PhaseBalance(phi=phi, flat=False, residual=residual)


# sequence ---------------------------------------------------------------------------------


def differential_mode(seq: PulseSequence) -> PulseSequence:
    """Toggle between common-mode (offset pi) and differential (offset 0) sensing."""
    offset = 0.0 if math.isclose(seq.phi2_offset_R % TWO_PI, math.pi) else math.pi
    return PulseSequence(seq.phi0L, seq.phi0R, seq.phi1L, seq.phi1R, seq.phi2, offset)


def pre_readout(coherences: np.ndarray, seq: PulseSequence) -> np.ndarray:
    """Coherences after the first two phase-plus-pulse stages."""
    out = apply_pulse(apply_phase(coherences, seq.phi0L, seq.phi0R))
    return apply_pulse(apply_phase(out, seq.phi1L, seq.phi1R))


def readout(coherences: np.ndarray, phi2L: float | np.ndarray, phi2R: float | np.ndarray) -> np.ndarray:
    return apply_pulse(apply_phase(coherences, phi2L, phi2R))


def signal_from_coherences(coherences: np.ndarray) -> np.ndarray:
    """S = (N_aL - N_bL) - (N_bR - N_aR) per trajectory."""
    return side_imbalance(coherences).sum(axis=-1)


def run_sequence(prepared: PreparedEnsemble, seq: PulseSequence) -> tuple[np.ndarray, np.ndarray]:
    """Per-trajectory signal S and corrected populations after the third pulse."""
    final = readout(pre_readout(prepared.coherences, seq), seq.phi2L, seq.phi2R)
    return signal_from_coherences(final), coherence_populations(final, prepared.vacuum_modes)


def signal_variance(signal: np.ndarray, vacuum_modes: tuple[float, float], *, axis: int = 0) -> np.ndarray | float:
    """Normally-ordered V(S) = Var_W(S) - (M_L + M_R)/2."""
    variance = np.var(signal, axis=axis, ddof=1) - 0.5 * (vacuum_modes[0] + vacuum_modes[1])
    return float(variance) if np.ndim(variance) == 0 else variance
