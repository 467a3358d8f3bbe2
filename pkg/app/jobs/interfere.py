"""Balance the pulse phases, sweep the readout phase and report the sensitivity."""

from __future__ import annotations

import argparse
import math
from pathlib import Path
from typing import Any

import numpy as np

from app.config import ExperimentConfig
from app.domain.models import OATParams, SweepResult
from app.interferometry.pulses import PreparedEnsemble
from app.interferometry.sweep import prepare_sequence
from app.jobs.common import add_common_arguments, execute, resolve_artifacts_dir, run_id_for
from app.jobs.prepare import build_prepared
from app.models.oat import oat_full_sequence, optimize_oat
from app.reporting.checkpoint import read_checkpoint
from app.reporting.csv_export import INTERFERE_COLUMNS, sweep_rows, table_name, write_table
from app.reporting.run_report import write_run_outputs
from app.reporting.summary import compute_summary


def load_or_prepare(config: ExperimentConfig, checkpoint: str | None) -> PreparedEnsemble:
    if checkpoint:
        prepared, _ = read_checkpoint(Path(checkpoint), expected_hash=config.preparation_hash())
        return prepared
    return build_prepared(config)


def _fwm_sweep(config: ExperimentConfig, checkpoint: str | None) -> tuple[SweepResult, dict[str, Any]]:
    prepared = load_or_prepare(config, checkpoint)
    offset = 0.0 if config.interferometer.differential else config.interferometer.phi2_offset_R
    seq, sweep = prepare_sequence(prepared, config.phi2_grid(), phi2_offset_R=offset)
    return sweep, {"phases": seq.reduced(), "overlap": prepared.overlap}


def _oat_sweep(config: ExperimentConfig) -> tuple[SweepResult, dict[str, Any]]:
    section = config.oat
    params: OATParams = optimize_oat(
        section.N_t,
        section.target,
        seed=config.rng_seed,
        threads=config.threads,
        **section.optimizer_options(),
    )
    phi_grid = 2.0 * math.pi * np.arange(section.phi_points) / section.phi_points
    sweep = oat_full_sequence(section.N_t, params, phi_grid, n_traj=section.n_traj, seed=config.rng_seed, threads=config.threads)
    return sweep, {
        "shear": params.shear,
        "theta": params.theta,
        "phi_work": params.phi_work,
        "target_reached": params.reached,
    }


def _records(sweep: SweepResult) -> list[dict[str, Any]]:
    records = []
    flagged = set(sweep.flagged)
    for index, phi in enumerate(sweep.phi2_values):
        record: dict[str, Any] = {"item": f"phi2={phi:.4f}", "status": "ok"}
        if index in flagged:
            record.update(status="flagged", reason="zero_slope")
        records.append(record)
    return records


def run(*, config: ExperimentConfig, checkpoint: str | None = None, artifacts_dir: str | None = None) -> dict[str, Any]:
    out_dir = resolve_artifacts_dir(config, artifacts_dir)
    digest = config.config_hash()
    if config.model == "oat":
        sweep, extra = _oat_sweep(config)
    else:
        sweep, extra = _fwm_sweep(config, checkpoint)

    csv_path = write_table(
        out_dir / table_name("interfere", digest, config.model),
        INTERFERE_COLUMNS,
        sweep_rows(sweep),
        config_hash=digest,
        seed=config.rng_seed,
        command="interfere",
    )
    headline = {
        "model": config.model,
        "min_delta_phi_sqrtNt": sweep.min_delta_phi_sqrt_nt,
        "phi2_best": float(sweep.phi2_values[sweep.best_index]),
        "visibility": sweep.visibility,
        "visibility_aL": sweep.visibility_aL,
        "N_t": sweep.N_t,
    }
    findings = []
    if math.isfinite(sweep.min_delta_phi_sqrt_nt) and sweep.min_delta_phi_sqrt_nt >= 1.0:
        findings.append(f"sensitivity {sweep.min_delta_phi_sqrt_nt:.3f} is not below the shot-noise limit")
    records = _records(sweep)
    json_path, md_path = write_run_outputs(
        artifacts_dir=out_dir,
        command="interfere",
        run_id=run_id_for("interfere", config),
        summary=compute_summary(records, total_items=len(records)),
        records=records,
        findings=findings,
        headline=headline,
    )
    return {
        **headline,
        **extra,
        "interfere_csv": str(csv_path),
        "summary_json": str(json_path),
        "report_md": str(md_path),
    }


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Run the pulse sequence and sweep the readout phase.")
    add_common_arguments(parser)
    parser.add_argument("--checkpoint", default=None, help="Checkpoint written by the prepare job.")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    return execute(
        "interfere",
        args,
        lambda config: run(config=config, checkpoint=args.checkpoint, artifacts_dir=args.output_dir),
    )


if __name__ == "__main__":
    raise SystemExit(main())
