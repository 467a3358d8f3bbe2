"""Run every subcommand in order and collect exit codes and payloads into one report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import subprocess
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Optional

REPO_ROOT = Path(__file__).resolve().parents[2]
SAMPLES_DIR = REPO_ROOT / "docs" / "samples"

CommandRunner = Callable[[list[str], Optional[Path], Optional[dict[str, str]]], "CommandResult"]


@dataclass
class CommandResult:
    command: list[str]
    exit_code: int
    stdout: str
    stderr: str


@dataclass
class Stage:
    name: str
    subcommand: str
    config: str | None
    extra: tuple[str, ...] = ()


# Each stage produces the data behind one plot.
STAGES: tuple[Stage, ...] = (
    Stage("four_mode_scan", "scan-fwm", "fourmode.example.json", ("--model", "fourmode")),
    Stage("multimode_scan", "scan-fwm", "multimode.example.json", ("--model", "multimode1d")),
    Stage("four_mode_interferometer", "interfere", "fourmode.example.json"),
    Stage("multimode_prepare", "prepare", "multimode.example.json"),
    Stage("multimode_interferometer", "interfere", "multimode.example.json"),
    Stage("oat_interferometer", "interfere", "oat.example.json"),
    Stage("robustness", "robustness", "fourmode.example.json"),
    Stage("selftest", "selftest", None),
)


def _resolve_log_dir() -> Path:
    configured = os.getenv("FWM_REPRODUCE_LOG_DIR", "").strip()
    if configured:
        return Path(configured).expanduser()
    return REPO_ROOT / "state" / "reproduce_logs"


def configure_logging() -> None:
    logger = logging.getLogger()
    logger.handlers = []
    logger.setLevel(logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    logger.addHandler(handler)


def run_command(
    command: list[str],
    cwd: Path | None = None,
    env: dict[str, str] | None = None,
) -> CommandResult:
    merged_env = os.environ.copy()
    if env:
        merged_env.update(env)
    completed = subprocess.run(
        command,
        cwd=str(cwd) if cwd else None,
        env=merged_env,
        capture_output=True,
        text=True,
        check=False,
    )
    return CommandResult(
        command=command,
        exit_code=completed.returncode,
        stdout=completed.stdout,
        stderr=completed.stderr,
    )


def _extract_json_payload(raw: str) -> dict[str, Any]:
    text = raw.strip()
    if not text:
        return {}
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass

    start = text.find("{")
    end = text.rfind("}")
    if start == -1 or end == -1 or end <= start:
        return {}
    try:
        return json.loads(text[start : end + 1])
    except json.JSONDecodeError:
        return {}


def build_command(stage: Stage, *, seed: int | None, threads: int | None, output_dir: Path) -> list[str]:
    command = [sys.executable, "-m", "app.jobs.cli", stage.subcommand, "--json-output", "--output-dir", str(output_dir)]
    if stage.config:
        command.extend(["--config", str(SAMPLES_DIR / stage.config)])
    if seed is not None:
        command.extend(["--seed", str(seed)])
    if threads is not None:
        command.extend(["--threads", str(threads)])
    command.extend(stage.extra)
    return command


def _stage_env(output_dir: Path) -> dict[str, str]:
    # prepare and interfere share a checkpoint inside the output directory
    return {"FWM_RUNTIME_ROOT": str(output_dir / "runtime")}


def execute(
    *,
    stages: tuple[Stage, ...] = STAGES,
    seed: int | None = None,
    threads: int | None = None,
    output_dir: Path,
    stop_on_failure: bool = False,
    command_runner: CommandRunner = run_command,
) -> tuple[int, dict[str, Any]]:
    output_dir.mkdir(parents=True, exist_ok=True)
    report: dict[str, Any] = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "output_dir": str(output_dir),
        "status": "SUCCESS",
        "stages": [],
    }
    for stage in stages:
        command = build_command(stage, seed=seed, threads=threads, output_dir=output_dir)
        logging.info("Running %s: %s", stage.name, " ".join(command))
        result = command_runner(command, REPO_ROOT, _stage_env(output_dir))
        payload = _extract_json_payload(result.stdout)
        report["stages"].append(
            {
                "name": stage.name,
                "subcommand": stage.subcommand,
                "exit_code": result.exit_code,
                "payload": payload,
            }
        )
        if result.exit_code != 0:
            logging.error("Stage %s exited %d: %s", stage.name, result.exit_code, result.stderr.strip()[-500:])
            report["status"] = "FAILED"
            if stop_on_failure:
                break

    report_path = write_report(_resolve_log_dir(), report)
    report["report_path"] = str(report_path)
    logging.info("Reproduction report saved to %s", report_path)
    return (0 if report["status"] == "SUCCESS" else 1), report


def write_report(log_dir: Path, report: dict[str, Any]) -> Path:
    log_dir.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    report_path = log_dir / f"reproduce_{stamp}.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    return report_path


def _parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Regenerate every data table.")
    parser.add_argument("--seed", type=int, default=None, help="Seed passed to every stage.")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads passed to every stage.")
    parser.add_argument(
        "--output-dir",
        default=str(REPO_ROOT / "state" / "reproduce"),
        help="Directory for CSV tables and run reports.",
    )
    parser.add_argument("--stop-on-failure", action="store_true", help="Stop at the first failing stage.")
    return parser.parse_args()


def main() -> int:
    args = _parse_args()
    configure_logging()
    exit_code, report = execute(
        seed=args.seed,
        threads=args.threads,
        output_dir=Path(args.output_dir),
        stop_on_failure=bool(args.stop_on_failure),
    )
    print(json.dumps(report, sort_keys=True))
    return exit_code


if __name__ == "__main__":
    raise SystemExit(main())
