"""Prepare an entangled ensemble and write it to a binary checkpoint."""

from __future__ import annotations

import argparse
from pathlib import Path
from typing import Any

from app.config import ExperimentConfig
from app.domain.errors import ConfigError
from app.domain.models import ModePopulations
from app.interferometry.pulses import PreparedEnsemble
from app.jobs.common import add_common_arguments, execute, resolve_artifacts_dir, run_id_for
from app.models.four_mode import prepare_four_mode
from app.models.multimode import MultimodeSetup, build_setup, prepare_multimode
from app.reporting.checkpoint import write_checkpoint
from app.reporting.run_report import write_run_outputs
from app.reporting.summary import compute_summary
from app.utils.hashing import short_token
from app.utils.runtime_paths import runtime_path


def multimode_setup(config: ExperimentConfig) -> MultimodeSetup:
    section = config.multimode
    return build_setup(
        config.grid(),
        config.physical_params(),
        config.seeds,
        config.nt_chi,
        dt=section.dt,
        interacting=section.ground_state == "interacting",
        dt_imag=section.dt_imag,
        max_imag_steps=section.max_imag_steps,
        separation_window=section.separation_window,
        separation_tolerance=section.separation_tolerance,
    )


def build_prepared(config: ExperimentConfig) -> PreparedEnsemble:
    """Run the mixing stage (and separation for the 1D model) for ``config``."""
    apply_fwm = config.interferometer.apply_fwm
    if config.model == "fourmode":
        states = prepare_four_mode(
            config.n_traj,
            params=config.four_mode_params(),
            seeds=config.seeds,
            dt=config.four_mode.dt,
            t_fwm=config.t_fwm,
            rng_seed=config.rng_seed,
            apply_fwm=apply_fwm,
            threads=config.threads,
            chunk_size=config.chunk_size,
        )
        return PreparedEnsemble.from_four_mode(states, t_fwm=config.t_fwm, rng_seed=config.rng_seed)
    if config.model == "multimode1d":
        prepared = prepare_multimode(
            config.n_traj,
            setup=multimode_setup(config),
            t_fwm=config.t_fwm,
            rng_seed=config.rng_seed,
            apply_fwm=apply_fwm,
            threads=config.threads,
            chunk_size=config.multimode.chunk_size,
        )
        return PreparedEnsemble.from_multimode(prepared, t_fwm=config.t_fwm, rng_seed=config.rng_seed)
    raise ConfigError("model_not_preparable", "Only fourmode and multimode1d ensembles can be prepared.", {"model": config.model})


def default_checkpoint_path(config: ExperimentConfig) -> Path:
    if config.output.checkpoint:
        return Path(config.output.checkpoint)
    token = short_token(config.preparation_hash())
    return runtime_path("checkpoints", f"prepared_{config.model}_{token}.ckpt")


def run(*, config: ExperimentConfig, checkpoint: str | None = None, artifacts_dir: str | None = None) -> dict[str, Any]:
    prepared = build_prepared(config)
    path = write_checkpoint(
        Path(checkpoint) if checkpoint else default_checkpoint_path(config),
        prepared,
        preparation_hash=config.preparation_hash(),
        seed=config.rng_seed,
    )
    means = ModePopulations.from_array(prepared.populations().mean(axis=0))
    flags = means.flags()
    records = [{"item": "prepared_ensemble", "status": "flagged" if flags else "ok", **({"reason": ",".join(flags)} if flags else {})}]
    run_id = run_id_for("prepare", config)
    json_path, md_path = write_run_outputs(
        artifacts_dir=resolve_artifacts_dir(config, artifacts_dir),
        command="prepare",
        run_id=run_id,
        summary=compute_summary(records, total_items=1),
        records=records,
        findings=[f"population {name} below -1/2" for name in flags],
        headline={"model": prepared.model, "t_fwm_s": prepared.t_fwm, **means.as_dict()},
    )
    return {
        "checkpoint": str(path),
        "model": prepared.model,
        "n_traj": prepared.n_traj,
        "preparation_token": short_token(config.preparation_hash()),
        "populations": means.as_dict(),
        "overlap": prepared.overlap,
        "summary_json": str(json_path),
        "report_md": str(md_path),
    }


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Prepare an ensemble and write a checkpoint.")
    add_common_arguments(parser)
    parser.add_argument("--checkpoint", default=None, help="Checkpoint output path.")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    return execute(
        "prepare",
        args,
        lambda config: run(config=config, checkpoint=args.checkpoint, artifacts_dir=args.output_dir),
    )


if __name__ == "__main__":
    raise SystemExit(main())
