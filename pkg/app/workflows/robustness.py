"""Atom-number robustness workflow for the OAT and four-wave-mixing schemes."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Sequence

import numpy as np

from app.domain.models import FourModeParams, OATParams, PulseSequence, RobustnessRow, SeedPopulations
from app.interferometry.pulses import PreparedEnsemble
from app.interferometry.sweep import delta_phi_at, sensitivity_sweep
from app.models.four_mode import MAX_PHASE_PER_STEP, prepare_four_mode
from app.models.oat import oat_full_sequence
from app.reporting.run_report import write_run_outputs
from app.reporting.summary import compute_summary
from app.utils.logging import get_structured_logger, log_run_event

SHOT_NOISE_LEVEL = 1.0


@dataclass(slots=True)
class FrozenOAT:
    """OAT working point held fixed while the atom number is perturbed."""

    params: OATParams
    N_bar: float
    n_traj: int
    seed: int
    phi_grid: np.ndarray
    threads: int = 1
    scheme: str = "oat"

    def evaluate(self, epsilon: float) -> RobustnessRow:
        N_t = self.N_bar * (1.0 + epsilon)
        params = replace(self.params, N_t=N_t)
        sweep = oat_full_sequence(N_t, params, self.phi_grid, n_traj=self.n_traj, seed=self.seed, threads=self.threads)
        return RobustnessRow(
            scheme=self.scheme,
            N_bar=N_t,
            epsilon=epsilon,
            min_delta_phi_sqrt_nt=sweep.min_delta_phi_sqrt_nt,
            frozen_delta_phi_sqrt_nt=delta_phi_at(sweep, self.params.phi_work),
            N_t=sweep.N_t,
        )


@dataclass(slots=True)
class FrozenFWM:
    """Four-mode preparation and pulse phases held fixed while all seeds scale."""

    params: FourModeParams
    seeds: SeedPopulations
    seq: PulseSequence
    dt: float
    t_fwm: float
    n_traj: int
    seed: int
    phi2_grid: np.ndarray
    threads: int = 1
    chunk_size: int = 64
    scheme: str = "fwm"

    def evaluate(self, epsilon: float) -> RobustnessRow:
        seeds = self.seeds.scaled(1.0 + epsilon)
        params = replace(self.params, N_t=seeds.total)
        # More atoms speed up the mixing; shrink the step so the phase guard still holds.
        dt = min(self.dt, (1.0 - 1e-9) * MAX_PHASE_PER_STEP / (params.chi * params.N_t))
        states = prepare_four_mode(
            self.n_traj,
            params=params,
            seeds=seeds,
            dt=dt,
            t_fwm=self.t_fwm,
            rng_seed=self.seed,
            threads=self.threads,
            chunk_size=self.chunk_size,
        )
        prepared = PreparedEnsemble.from_four_mode(states, t_fwm=self.t_fwm, rng_seed=self.seed)
        sweep = sensitivity_sweep(prepared, self.phi2_grid, self.seq)
        return RobustnessRow(
            scheme=self.scheme,
            N_bar=seeds.total,
            epsilon=epsilon,
            min_delta_phi_sqrt_nt=sweep.min_delta_phi_sqrt_nt,
            frozen_delta_phi_sqrt_nt=delta_phi_at(sweep, self.seq.phi2),
            N_t=sweep.N_t,
        )


def robustness_scan(
    scheme: str,
    epsilons: Sequence[float],
    frozen: FrozenOAT | FrozenFWM,
    *,
    run_id: str = "",
) -> list[RobustnessRow]:
    """One row per epsilon; a failing epsilon yields a NaN row with status 'failed'."""
    logger = get_structured_logger()
    rows: list[RobustnessRow] = []
    for epsilon in epsilons:
        try:
            row = frozen.evaluate(float(epsilon))
            log_run_event(
                logger,
                step="robustness",
                model=scheme,
                run_id=run_id,
                status="ok",
                message="Perturbed run finished",
                epsilon=float(epsilon),
                frozen=row.frozen_delta_phi_sqrt_nt,
            )
        except Exception as exc:  # broad so one bad epsilon does not drop the table
            row = RobustnessRow(
                scheme=scheme,
                N_bar=float("nan"),
                epsilon=float(epsilon),
                min_delta_phi_sqrt_nt=float("nan"),
                frozen_delta_phi_sqrt_nt=float("nan"),
                N_t=float("nan"),
                status=f"failed:{getattr(exc, 'code', type(exc).__name__)}",
            )
            log_run_event(
                logger,
                step="robustness",
                model=scheme,
                run_id=run_id,
                status="failed",
                error_code=getattr(exc, "code", type(exc).__name__.upper()),
                error_message=str(exc),
                message="Perturbed run raised",
                epsilon=float(epsilon),
            )
        rows.append(row)
    return rows


def crossing_epsilon(rows: Sequence[RobustnessRow], level: float = SHOT_NOISE_LEVEL) -> float | None:
    """Smallest |epsilon| at which the frozen sensitivity reaches ``level``.

    Each sign of epsilon is searched outward from zero and the crossing is
    linearly interpolated; None if neither side crosses.
    """
    found: list[float] = []
    for sign in (1.0, -1.0):
        side = sorted(
            (row for row in rows if row.epsilon * sign >= 0 and math.isfinite(row.frozen_delta_phi_sqrt_nt)),
            key=lambda row: abs(row.epsilon),
        )
        for previous, current in zip(side, side[1:]):
            if previous.frozen_delta_phi_sqrt_nt < level <= current.frozen_delta_phi_sqrt_nt:
                e0, e1 = abs(previous.epsilon), abs(current.epsilon)
                y0, y1 = previous.frozen_delta_phi_sqrt_nt, current.frozen_delta_phi_sqrt_nt
                found.append(e0 + (level - y0) * (e1 - e0) / (y1 - y0))
                break
        else:
            if side and side[0].frozen_delta_phi_sqrt_nt >= level:
                found.append(abs(side[0].epsilon))
    return min(found) if found else None


def _record(row: RobustnessRow) -> dict[str, Any]:
    failed = row.status.startswith("failed")
    return {
        "item": f"{row.scheme} eps={row.epsilon:+.4f}",
        "scheme": row.scheme,
        "epsilon": row.epsilon,
        "N_bar": row.N_bar,
        "min_delta_phi_sqrtNt": row.min_delta_phi_sqrt_nt,
        "frozen_delta_phi_sqrtNt": row.frozen_delta_phi_sqrt_nt,
        "status": "failed" if failed else "ok",
        **({"reason": row.status.partition(":")[2]} if failed else {}),
    }


def run_robustness_workflow(
    tasks: Sequence[tuple[str, Sequence[float], FrozenOAT | FrozenFWM]],
    *,
    run_id: str,
    artifacts_dir: str,
) -> dict[str, Any]:
    """Run every (label, epsilons, frozen) task, then write summary and report."""
    rows: list[RobustnessRow] = []
    crossings: dict[str, float | None] = {}
    findings: list[str] = []
    for label, epsilons, frozen in tasks:
        task_rows = robustness_scan(frozen.scheme, epsilons, frozen, run_id=run_id)
        rows.extend(task_rows)
        crossing = crossing_epsilon(task_rows)
        crossings[label] = crossing
        if frozen.scheme == "fwm" and crossing is not None:
            findings.append(f"{label}: frozen FWM sequence reaches shot noise at |eps|={crossing:.3f}")

    records = [_record(row) for row in rows]
    summary = compute_summary(records, total_items=len(records))
    json_path, md_path = write_run_outputs(
        artifacts_dir=artifacts_dir,
        command="robustness",
        run_id=run_id,
        summary=summary,
        records=records,
        findings=findings,
        headline={f"crossing {label}": value for label, value in crossings.items()},
    )
    return {
        "rows": rows,
        "crossings": crossings,
        "summary": summary,
        "summary_json": str(json_path),
        "report_md": str(md_path),
    }
