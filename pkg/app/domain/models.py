from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from app.domain.errors import ConfigError

# Population column order used by every table and per-trajectory array.
MODE_ORDER: tuple[str, ...] = ("aL", "bL", "aR", "bR")

# Mode pairs reported for the relative number difference variance.
VARIANCE_PAIRS: tuple[tuple[str, str], ...] = (
    ("aR", "bL"),
    ("aL", "bR"),
    ("aL", "bL"),
    ("aR", "bR"),
    ("aL", "aR"),
    ("bL", "bR"),
)

TWO_PI = 2.0 * math.pi


def pair_key(pair: tuple[str, str]) -> str:
    return f"{pair[0]}_{pair[1]}"


@dataclass(slots=True)
class ConfigIssue:
    code: str
    message: str
    details: dict[str, Any] = field(default_factory=dict)


@dataclass(slots=True)
class ModePopulations:
    N_aL: float
    N_bL: float
    N_aR: float
    N_bR: float
    N_t: float = float("nan")

    def __post_init__(self) -> None:
        if math.isnan(self.N_t):
            self.N_t = self.N_aL + self.N_bL + self.N_aR + self.N_bR

    @classmethod
    def from_array(cls, values: Any) -> "ModePopulations":
        arr = np.asarray(values, dtype=float)
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.N_aL, self.N_bL, self.N_aR, self.N_bR)

    def as_dict(self) -> dict[str, float]:
        return {"N_aL": self.N_aL, "N_bL": self.N_bL, "N_aR": self.N_aR, "N_bR": self.N_bR, "N_t": self.N_t}

    def flags(self) -> list[str]:
        """Names of populations below the Wigner-correction floor of -0.5."""
        flagged = [name for name, value in zip(MODE_ORDER, self.as_tuple()) if value < -0.5]
        total = sum(self.as_tuple())
        if not math.isclose(total, self.N_t, rel_tol=1e-9, abs_tol=1e-9):
            flagged.append("N_t")
        return flagged

    def clamped(self) -> "ModePopulations":
        """Reporting-only copy with small negatives clamped to zero."""
        values = [max(value, 0.0) if value >= -0.5 else value for value in self.as_tuple()]
        return ModePopulations(*values)


@dataclass(slots=True)
class SeedPopulations:
    N_aL0: float = 1.0e5
    N_aR0: float = 1.0e3
    N_bL0: float = 1.0e3
    N_bR0: float = 1.0e5
    phase_aL: float = 0.0
    phase_aR: float = 0.0
    phase_bL: float = 0.0
    phase_bR: float = 0.0

    def __post_init__(self) -> None:
        for name in ("N_aL0", "N_aR0", "N_bL0", "N_bR0"):
            if getattr(self, name) < 0:
                raise ConfigError("negative_seed", f"{name} must be >= 0.", {name: getattr(self, name)})

    @property
    def total(self) -> float:
        return self.N_aL0 + self.N_aR0 + self.N_bL0 + self.N_bR0

    def scaled(self, factor: float) -> "SeedPopulations":
        return replace(
            self,
            N_aL0=self.N_aL0 * factor,
            N_aR0=self.N_aR0 * factor,
            N_bL0=self.N_bL0 * factor,
            N_bR0=self.N_bR0 * factor,
        )

    def amplitudes(self) -> np.ndarray:
        """Coherent means ordered (alpha0, alphaK, beta0, betaK)."""
        return np.array(
            [
                math.sqrt(self.N_aL0) * np.exp(1j * self.phase_aL),
                math.sqrt(self.N_aR0) * np.exp(1j * self.phase_aR),
                math.sqrt(self.N_bL0) * np.exp(1j * self.phase_bL),
                math.sqrt(self.N_bR0) * np.exp(1j * self.phase_bR),
            ],
            dtype=np.complex128,
        )


@dataclass(slots=True)
class FourModeParams:
    chi: float
    omega0: float = 0.0
    omegaK: float = 0.0
    N_t: float = 2.02e5

    def __post_init__(self) -> None:
        if not self.chi > 0:
            raise ConfigError("invalid_chi", "Four-wave mixing rate chi must be > 0.", {"chi": self.chi})
        if self.omegaK < self.omega0:
            raise ConfigError(
                "invalid_omega",
                "omegaK must be >= omega0.",
                {"omega0": self.omega0, "omegaK": self.omegaK},
            )


@dataclass(slots=True)
class Grid1D:
    n_points: int
    length: float
    dx: float = field(init=False)
    x: np.ndarray = field(init=False, repr=False)
    k: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.n_points < 2 or self.n_points & (self.n_points - 1):
            raise ConfigError("grid_not_power_of_two", "n_points must be a power of two.", {"n_points": self.n_points})
        if not self.length > 0:
            raise ConfigError("invalid_grid_length", "Grid length must be > 0.", {"length": self.length})
        self.dx = self.length / self.n_points
        self.x = -0.5 * self.length + self.dx * np.arange(self.n_points)
        self.k = 2.0 * math.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def k_nyquist(self) -> float:
        return math.pi / self.dx

    def contains(self, x0: float) -> bool:
        return bool(self.x[0] <= x0 <= self.x[-1])


@dataclass(slots=True)
class Physical1DParams:
    mass: float = 1.4431609e-25
    U_1d: float = 0.0
    k0: float = 4.0 * math.pi / 780e-9
    trap_omega_x: float = TWO_PI * 5.0
    r0: float = 0.55e-6
    t_fwm: float = 0.1e-3
    t_separation: float = 70e-3
    x0: float = 0.4e-3
    scattering_length: float = 5.3e-9
    interaction_mode: str = "calibrated"


@dataclass(slots=True)
class PulseSequence:
    phi0L: float = 0.0
    phi0R: float = 0.0
    phi1L: float = 0.0
    phi1R: float = 0.0
    phi2: float = 0.0
    phi2_offset_R: float = math.pi

    @property
    def phi2L(self) -> float:
        return self.phi2

    @property
    def phi2R(self) -> float:
        return self.phi2 + self.phi2_offset_R

    def with_phi2(self, phi2: float) -> "PulseSequence":
        return replace(self, phi2=phi2)

    def stages(self) -> list[tuple[float, float]]:
        return [(self.phi0L, self.phi0R), (self.phi1L, self.phi1R), (self.phi2L, self.phi2R)]

    def reduced(self) -> dict[str, float]:
        values = {
            "phi0L": self.phi0L,
            "phi0R": self.phi0R,
            "phi1L": self.phi1L,
            "phi1R": self.phi1R,
            "phi2": self.phi2,
            "phi2_offset_R": self.phi2_offset_R,
        }
        return {name: value % TWO_PI for name, value in values.items()}


@dataclass(slots=True)
class SweepResult:
    phi2_values: np.ndarray
    mean_S: np.ndarray
    var_S: np.ndarray
    delta_phi: np.ndarray
    populations: np.ndarray
    N_t: float
    visibility: float
    visibility_aL: float
    flagged: list[int] = field(default_factory=list)

    @property
    def delta_phi_sqrt_nt(self) -> np.ndarray:
        return self.delta_phi * math.sqrt(self.N_t)

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.delta_phi))

    @property
    def min_delta_phi_sqrt_nt(self) -> float:
        return float(self.delta_phi_sqrt_nt[self.best_index])

    def population_records(self) -> list[ModePopulations]:
        return [ModePopulations.from_array(row) for row in self.populations]


@dataclass(slots=True)
class OATParams:
    chi_oat: float
    t_shear: float
    theta: float
    N_t: float
    chi_b_ratio: float = 1.0
    differential_phase: float = 0.0
    differential_reference: float = 1.0
    phi_work: float = 0.0
    objective: float = float("nan")
    reached: bool = False

    def __post_init__(self) -> None:
        product = self.chi_oat * self.t_shear * self.N_t
        if not math.isfinite(product):
            raise ConfigError("oat_out_of_range", "chi_oat * t_shear * N_t must be finite.", {"product": product})
        if not self.differential_reference > 0:
            raise ConfigError(
                "oat_out_of_range",
                "differential_reference must be > 0.",
                {"differential_reference": self.differential_reference},
            )

    @property
    def shear(self) -> float:
        return self.chi_oat * self.t_shear * self.N_t


@dataclass(slots=True)
class PopulationScan:
    model: str
    t_values: np.ndarray
    nt_chi: float
    populations: np.ndarray
    v: dict[str, np.ndarray]
    v_se: dict[str, np.ndarray]
    N_undepleted: np.ndarray
    v_undepleted: np.ndarray
    overlap: np.ndarray | None = None

    @property
    def nt_chi_t(self) -> np.ndarray:
        return self.nt_chi * self.t_values

    def minimum(self, pair: str = "aR_bL") -> tuple[float, float]:
        """Return (min v, dimensionless time at which it occurs)."""
        values = np.asarray(self.v[pair], dtype=float)
        if not np.isfinite(values).any():
            return float("nan"), float("nan")
        index = int(np.nanargmin(values))
        return float(values[index]), float(self.nt_chi_t[index])


@dataclass(slots=True)
class RobustnessRow:
    scheme: str
    N_bar: float
    epsilon: float
    min_delta_phi_sqrt_nt: float
    frozen_delta_phi_sqrt_nt: float
    N_t: float
    status: str = "ok"
