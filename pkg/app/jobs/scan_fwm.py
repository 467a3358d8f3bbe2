"""Scan populations and number-difference variances against the mixing time."""

from __future__ import annotations

import argparse
import math
from typing import Any

import numpy as np

from app.config import ExperimentConfig
from app.domain.models import ModePopulations, PopulationScan
from app.jobs.common import add_common_arguments, execute, resolve_artifacts_dir, run_id_for
from app.jobs.prepare import multimode_setup
from app.models.four_mode import four_mode_scan
from app.models.multimode import multimode_scan
from app.reporting.csv_export import (
    DENSITY_COLUMNS,
    SCAN_COLUMNS,
    density_rows,
    scan_rows,
    table_name,
    write_table,
)
from app.reporting.run_report import write_run_outputs
from app.reporting.summary import compute_summary

SCAN_MODELS = ("fourmode", "multimode1d")


def _scan_model(config: ExperimentConfig, model: str) -> tuple[PopulationScan, dict[float, np.ndarray]]:
    times = config.scan_times()
    if model == "fourmode":
        scan = four_mode_scan(
            times,
            config.n_traj,
            params=config.four_mode_params(),
            seeds=config.seeds,
            dt=config.four_mode.dt,
            rng_seed=config.rng_seed,
            threads=config.threads,
            chunk_size=config.chunk_size,
            nt_chi=config.nt_chi,
        )
        return scan, {}
    return multimode_scan(
        times,
        config.n_traj,
        setup=multimode_setup(config),
        rng_seed=config.rng_seed,
        density_times=config.multimode.density_times,
        threads=config.threads,
        chunk_size=config.multimode.chunk_size,
        nt_chi=config.nt_chi,
    )


def _records(scan: PopulationScan, tolerance: float) -> list[dict[str, Any]]:
    records = []
    for index, t in enumerate(scan.t_values):
        flags = ModePopulations.from_array(scan.populations[index]).flags()
        if not math.isfinite(float(scan.v["aR_bL"][index])):
            flags.append("v_aR_bL_undefined")
        if scan.overlap is not None and scan.overlap[index] >= tolerance:
            flags.append("packets_overlap")
        record: dict[str, Any] = {"item": f"{scan.model} t={t:.4e}s", "status": "flagged" if flags else "ok"}
        if flags:
            record["reason"] = ",".join(flags)
        records.append(record)
    return records


def run(*, config: ExperimentConfig, models: list[str] | None = None, artifacts_dir: str | None = None) -> dict[str, Any]:
    out_dir = resolve_artifacts_dir(config, artifacts_dir)
    digest = config.config_hash()
    rows: list[list[Any]] = []
    density_table: list[list[Any]] = []
    records: list[dict[str, Any]] = []
    headline: dict[str, Any] = {}

    for model in models or config.scan.models:
        if model not in SCAN_MODELS:
            continue
        scan, densities = _scan_model(config, model)
        rows.extend(scan_rows(scan))
        if densities:
            density_table.extend(density_rows(densities, config.grid().x))
        records.extend(_records(scan, config.multimode.separation_tolerance))
        finite = np.isfinite(scan.v["aR_bL"])
        if finite.any():
            index = int(np.nanargmin(np.where(finite, scan.v["aR_bL"], np.nan)))
            headline[f"{model} min v_aR_bL"] = float(scan.v["aR_bL"][index])
            headline[f"{model} at N_t*chi*t"] = float(scan.nt_chi_t[index])

    csv_path = write_table(
        out_dir / table_name("scan-fwm", digest),
        SCAN_COLUMNS,
        rows,
        config_hash=digest,
        seed=config.rng_seed,
        command="scan-fwm",
    )
    outputs = {"scan_csv": str(csv_path)}
    if density_table:
        outputs["density_csv"] = str(
            write_table(
                out_dir / table_name("scan-fwm", digest, "densities"),
                DENSITY_COLUMNS,
                density_table,
                config_hash=digest,
                seed=config.rng_seed,
                command="scan-fwm",
            )
        )

    json_path, md_path = write_run_outputs(
        artifacts_dir=out_dir,
        command="scan-fwm",
        run_id=run_id_for("scan-fwm", config),
        summary=compute_summary(records, total_items=len(records)),
        records=records,
        headline=headline,
    )
    return {**outputs, **headline, "summary_json": str(json_path), "report_md": str(md_path)}


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Scan populations and variances versus t_fwm.")
    add_common_arguments(parser)
    parser.add_argument("--model", action="append", choices=SCAN_MODELS, help="Model to scan; may be repeated.")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    return execute(
        "scan-fwm",
        args,
        lambda config: run(config=config, models=args.model, artifacts_dir=args.output_dir),
    )


if __name__ == "__main__":
    raise SystemExit(main())
