from __future__ import annotations

import math

import numpy as np

from app.config import MODELS, ExperimentConfig
from app.domain.errors import ConfigError
from app.domain.models import ConfigIssue
from app.models.four_mode import MAX_PHASE_PER_STEP

GROUND_STATES = ("interacting", "noninteracting")
INTERACTION_MODES = ("calibrated", "physical")
MIN_PHI2_POINTS = 32


def validate_config(config: ExperimentConfig) -> list[ConfigIssue]:
    """Collect every configuration problem instead of stopping at the first one."""
    issues: list[ConfigIssue] = []
    seeds = config.seeds
    section = config.multimode

    if config.model not in MODELS:
        issues.append(ConfigIssue("invalid_model", f"model must be one of {MODELS}.", {"model": config.model}))
    for name in config.scan.models:
        if name not in MODELS:
            issues.append(ConfigIssue("invalid_scan_model", "Unknown model in scan.models.", {"model": name}))

    if config.n_traj < 2:
        issues.append(ConfigIssue("invalid_n_traj", "n_traj must be >= 2.", {"n_traj": config.n_traj}))
    if config.threads < 1:
        issues.append(ConfigIssue("invalid_threads", "threads must be >= 1.", {"threads": config.threads}))
    if config.chunk_size < 1 or section.chunk_size < 1:
        issues.append(ConfigIssue("invalid_chunk_size", "chunk sizes must be >= 1.", {}))

    if seeds.total <= 0:
        issues.append(ConfigIssue("empty_seeds", "Seed populations must hold at least one atom.", {}))
    if not config.nt_chi > 0 or seeds.total <= 0:
        issues.append(ConfigIssue("invalid_chi", "chi = nt_chi / N_t must be > 0.", {"nt_chi": config.nt_chi}))
    else:
        omega0 = config.four_mode.omega0
        omegaK = config.four_mode.omegaK
        if omega0 is not None and omegaK is not None and omegaK < omega0:
            issues.append(
                ConfigIssue("invalid_omega", "omegaK must be >= omega0.", {"omega0": omega0, "omegaK": omegaK})
            )
        phase = config.nt_chi * config.four_mode.dt
        if phase > MAX_PHASE_PER_STEP:
            issues.append(
                ConfigIssue(
                    "four_mode_dt_too_large",
                    "chi * N_t * dt must be <= 1e-3.",
                    {"chi_nt_dt": phase, "dt": config.four_mode.dt},
                )
            )

    n_points = section.grid_points
    if n_points < 2 or n_points & (n_points - 1):
        issues.append(ConfigIssue("grid_not_power_of_two", "grid_points must be a power of two.", {"n_points": n_points}))
    elif section.grid_length > 0:
        dx = section.grid_length / n_points
        limit = math.pi / (section.k0 * (1.0 + section.k_margin))
        if dx > limit:
            issues.append(
                ConfigIssue("grid_too_coarse", "dx does not resolve k0 with the configured margin.", {"dx": dx, "limit": limit})
            )
        if not -0.5 * section.grid_length <= section.x0 < 0.5 * section.grid_length:
            issues.append(ConfigIssue("x0_outside_grid", "x0 must lie inside the grid.", {"x0": section.x0}))
    else:
        issues.append(ConfigIssue("invalid_grid_length", "grid_length must be > 0.", {}))

    if section.interaction_mode not in INTERACTION_MODES:
        issues.append(
            ConfigIssue("invalid_interaction_mode", f"interaction_mode must be one of {INTERACTION_MODES}.", {})
        )
    if section.ground_state not in GROUND_STATES:
        issues.append(ConfigIssue("invalid_ground_state", f"ground_state must be one of {GROUND_STATES}.", {}))

    latest = max([config.t_fwm, config.scan.t_stop, *section.density_times])
    if latest > section.t_separation:
        issues.append(
            ConfigIssue(
                "t_fwm_exceeds_separation",
                "Mixing times must not exceed t_separation.",
                {"latest": latest, "t_separation": section.t_separation},
            )
        )
    if config.t_fwm < 0:
        issues.append(ConfigIssue("negative_t_fwm", "t_fwm must be >= 0.", {"t_fwm": config.t_fwm}))

    if config.interferometer.phi2_points < MIN_PHI2_POINTS:
        issues.append(
            ConfigIssue(
                "phi2_grid_too_small",
                f"phi2 sweep needs at least {MIN_PHI2_POINTS} points.",
                {"phi2_points": config.interferometer.phi2_points},
            )
        )

    scan = config.scan
    if scan.num < 1 or scan.t_start < 0 or scan.t_stop < scan.t_start:
        issues.append(
            ConfigIssue(
                "grid_not_monotone",
                "Scan grid must satisfy 0 <= t_start <= t_stop with num >= 1.",
                {"t_start": scan.t_start, "t_stop": scan.t_stop, "num": scan.num},
            )
        )
    if np.any(np.diff(section.density_times) < 0):
        issues.append(ConfigIssue("grid_not_monotone", "density_times must be increasing.", {}))

    if config.oat.N_t <= 0 or config.oat.target <= 0 or config.oat.chi_oat <= 0:
        issues.append(ConfigIssue("invalid_oat", "OAT N_t, target and chi_oat must be > 0.", {}))

    return issues


def ensure_valid(config: ExperimentConfig) -> ExperimentConfig:
    issues = validate_config(config)
    if issues:
        raise ConfigError(
            "invalid_config",
            "Configuration failed validation: " + ", ".join(issue.code for issue in issues),
            {"codes": [issue.code for issue in issues], "issues": [issue.message for issue in issues]},
        )
    return config
