"""Shared argument parsing, config loading and exit-code mapping for job entrypoints."""

from __future__ import annotations

import argparse
import json
import logging
import os
from pathlib import Path
from typing import Any, Callable

from app.config import ExperimentConfig, apply_overrides, load_config
from app.domain.errors import SimulationError
from app.orchestration.validation import ensure_valid
from app.utils.hashing import build_run_id
from app.utils.logging import get_structured_logger, log_run_event
from app.utils.runtime_paths import artifact_root

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"

logger = logging.getLogger(__name__)


def add_common_arguments(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser.add_argument(
        "--config",
        default=os.getenv("FWM_CONFIG_PATH"),
        help="JSON config file. Defaults to built-in parameters.",
    )
    parser.add_argument("--seed", type=int, default=None, help="Override rng seed (else FWM_SEED, else config).")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (else FWM_THREADS, else config).")
    parser.add_argument(
        "--log-level",
        default=os.getenv("FWM_LOG_LEVEL", "INFO"),
        help="Logging level. Default: INFO",
    )
    parser.add_argument("--output-dir", default=None, help="Artifact directory (else FWM_ARTIFACT_ROOT).")
    parser.add_argument(
        "--json-output",
        action="store_true",
        help="Emit a machine-readable JSON payload to stdout.",
    )
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(level=level.strip().upper() or "INFO", format=LOG_FORMAT)
    os.environ["FWM_LOG_LEVEL"] = level.strip().upper() or "INFO"


def load_run_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(getattr(args, "config", None))
    apply_overrides(config, seed=getattr(args, "seed", None), threads=getattr(args, "threads", None))
    return ensure_valid(config)


def resolve_artifacts_dir(config: ExperimentConfig, override: str | None = None) -> Path:
    if override:
        return Path(override)
    if config.output.directory:
        return Path(config.output.directory)
    return artifact_root()


def run_id_for(command: str, config: ExperimentConfig) -> str:
    return build_run_id(command, config.config_hash(), config.rng_seed)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, SimulationError):
        return exc.exit_code
    return 1


def _emit(payload: dict[str, Any], json_output: bool) -> None:
    if json_output:
        print(json.dumps(payload, default=str))
        return
    for key, value in payload.items():
        if isinstance(value, (dict, list)):
            continue
        print(f"{key}: {value}")


def execute(command: str, args: argparse.Namespace, run: Callable[[ExperimentConfig], dict[str, Any]]) -> int:
    """Run one job, print its payload and map failures to exit codes."""
    configure_logging(args.log_level)
    events = get_structured_logger()
    run_id = ""
    model = ""
    try:
        config = load_run_config(args)
        run_id = run_id_for(command, config)
        model = config.model
        log_run_event(
            events,
            step=command,
            model=model,
            run_id=run_id,
            status="started",
            config_hash=config.config_hash(),
            n_traj=config.n_traj,
        )
        payload = run(config)
    except Exception as exc:  # broad so every failure maps to an exit code
        code = exit_code_for(exc)
        log_run_event(
            events,
            step=command,
            model=model,
            run_id=run_id,
            status="failed",
            error_code=getattr(exc, "code", type(exc).__name__.upper()),
            error_message=str(exc),
            exit_code=code,
            **({"trajectory": exc.details["trajectory"]} if isinstance(exc, SimulationError) and "trajectory" in exc.details else {}),
        )
        error = exc.to_payload() if isinstance(exc, SimulationError) else {"code": type(exc).__name__, "message": str(exc)}
        _emit({"command": command, "status": "failed", "exit_code": code, "error": error}, args.json_output)
        return code

    log_run_event(events, step=command, model=model, run_id=run_id, status="finished")
    _emit({"command": command, "status": "ok", "exit_code": 0, **payload}, args.json_output)
    return 0
