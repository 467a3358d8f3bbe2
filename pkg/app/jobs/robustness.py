"""Freeze each scheme at its optimum and re-run it with a perturbed atom number."""

from __future__ import annotations

import argparse
import math
from dataclasses import replace
from typing import Any

import numpy as np

from app.config import ExperimentConfig
from app.interferometry.sweep import prepare_sequence
from app.jobs.common import add_common_arguments, execute, resolve_artifacts_dir, run_id_for
from app.jobs.prepare import build_prepared
from app.models.oat import optimize_oat
from app.reporting.csv_export import ROBUSTNESS_COLUMNS, robustness_rows, table_name, write_table
from app.workflows.robustness import FrozenFWM, FrozenOAT, run_robustness_workflow

SCHEMES = ("oat", "fwm")


def oat_tasks(config: ExperimentConfig) -> list[tuple[str, list[float], FrozenOAT]]:
    section = config.oat
    phi_grid = 2.0 * math.pi * np.arange(section.phi_points) / section.phi_points
    tasks = []
    for N_bar in config.robustness.oat_atom_numbers:
        params = optimize_oat(
            N_bar, section.target, seed=config.rng_seed, threads=config.threads, **section.optimizer_options()
        )
        frozen = FrozenOAT(
            params=params,
            N_bar=N_bar,
            n_traj=section.n_traj,
            seed=config.rng_seed,
            phi_grid=phi_grid,
            threads=config.threads,
        )
        tasks.append((f"oat N={N_bar:g}", list(config.robustness.oat_epsilons), frozen))
    return tasks


def fwm_task(config: ExperimentConfig) -> tuple[str, list[float], FrozenFWM]:
    four_mode = replace(config, model="fourmode")
    prepared = build_prepared(four_mode)
    offset = 0.0 if config.interferometer.differential else config.interferometer.phi2_offset_R
    seq, _ = prepare_sequence(prepared, config.phi2_grid(), phi2_offset_R=offset)
    frozen = FrozenFWM(
        params=config.four_mode_params(),
        seeds=config.seeds,
        seq=seq,
        dt=config.four_mode.dt,
        t_fwm=config.t_fwm,
        n_traj=config.n_traj,
        seed=config.rng_seed,
        phi2_grid=config.phi2_grid(),
        threads=config.threads,
        chunk_size=config.chunk_size,
    )
    return f"fwm N={config.seeds.total:g}", list(config.robustness.fwm_epsilons), frozen


def run(*, config: ExperimentConfig, schemes: list[str] | None = None, artifacts_dir: str | None = None) -> dict[str, Any]:
    out_dir = resolve_artifacts_dir(config, artifacts_dir)
    selected = schemes or list(SCHEMES)
    tasks: list[tuple[str, list[float], FrozenOAT | FrozenFWM]] = []
    if "oat" in selected:
        tasks.extend(oat_tasks(config))
    if "fwm" in selected:
        tasks.append(fwm_task(config))

    run_id = run_id_for("robustness", config)
    result = run_robustness_workflow(tasks, run_id=run_id, artifacts_dir=str(out_dir))
    digest = config.config_hash()
    csv_path = write_table(
        out_dir / table_name("robustness", digest),
        ROBUSTNESS_COLUMNS,
        robustness_rows(result["rows"]),
        config_hash=digest,
        seed=config.rng_seed,
        command="robustness",
    )
    return {
        "crossings": result["crossings"],
        "failed": result["summary"]["failed"]["total"],
        "robustness_csv": str(csv_path),
        "summary_json": result["summary_json"],
        "report_md": result["report_md"],
    }


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Atom-number robustness of the frozen OAT and FWM sequences.")
    add_common_arguments(parser)
    parser.add_argument("--scheme", action="append", choices=SCHEMES, help="Scheme to perturb; may be repeated.")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    return execute(
        "robustness",
        args,
        lambda config: run(config=config, schemes=args.scheme, artifacts_dir=args.output_dir),
    )


if __name__ == "__main__":
    raise SystemExit(main())
