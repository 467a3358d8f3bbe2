from __future__ import annotations

import json
from pathlib import Path

from scripts.reproduce import run_all_figures


class _SequenceRunner:
    def __init__(self, results):
        self.results = list(results)
        self.commands: list[list[str]] = []
        self.envs: list[dict[str, str] | None] = []

    def __call__(self, command, cwd, env):
        self.commands.append(command)
        self.envs.append(env)
        if not self.results:
            raise AssertionError(f"No fake result configured for command: {command}")
        return self.results.pop(0)


def _cmd(exit_code: int, stdout: str = "", stderr: str = "") -> run_all_figures.CommandResult:
    return run_all_figures.CommandResult(command=[], exit_code=exit_code, stdout=stdout, stderr=stderr)


def test_build_command_forwards_globals_and_stage_options(tmp_path: Path) -> None:
    stage = run_all_figures.Stage("multimode_scan", "scan-fwm", "multimode.example.json", ("--model", "multimode1d"))

    command = run_all_figures.build_command(stage, seed=11, threads=4, output_dir=tmp_path)

    assert command[1:4] == ["-m", "app.jobs.cli", "scan-fwm"]
    assert "--json-output" in command
    assert command[command.index("--output-dir") + 1] == str(tmp_path)
    assert command[command.index("--config") + 1].endswith("docs/samples/multimode.example.json")
    assert command[command.index("--seed") + 1] == "11"
    assert command[command.index("--threads") + 1] == "4"
    assert command[-2:] == ["--model", "multimode1d"]


def test_every_stage_config_ships_with_the_repo() -> None:
    for stage in run_all_figures.STAGES:
        if stage.config:
            assert (run_all_figures.SAMPLES_DIR / stage.config).exists(), stage.config


def test_execute_collects_payloads_and_writes_report(monkeypatch, tmp_path: Path) -> None:
    monkeypatch.setenv("FWM_REPRODUCE_LOG_DIR", str(tmp_path / "logs"))
    stages = (
        run_all_figures.Stage("four_mode_scan", "scan-fwm", "fourmode.example.json"),
        run_all_figures.Stage("selftest", "selftest", None),
    )
    runner = _SequenceRunner([
        _cmd(0, stdout="scan log line\n" + json.dumps({"status": "ok", "scan_csv": "/out/scan.csv"})),
        _cmd(0, stdout=json.dumps({"status": "ok", "passed": True})),
    ])

    exit_code, report = run_all_figures.execute(stages=stages, output_dir=tmp_path / "out", command_runner=runner)

    assert exit_code == 0
    assert report["status"] == "SUCCESS"
    assert report["stages"][0]["payload"]["scan_csv"] == "/out/scan.csv"
    assert "--config" not in runner.commands[1]
    assert runner.envs[0] == {"FWM_RUNTIME_ROOT": str(tmp_path / "out" / "runtime")}
    saved = json.loads(Path(report["report_path"]).read_text(encoding="utf-8"))
    assert [stage["name"] for stage in saved["stages"]] == ["four_mode_scan", "selftest"]


def test_execute_stops_on_failure_when_asked(monkeypatch, tmp_path: Path) -> None:
    monkeypatch.setenv("FWM_REPRODUCE_LOG_DIR", str(tmp_path / "logs"))
    runner = _SequenceRunner([
        _cmd(0, stdout="{}"),
        _cmd(4, stdout=json.dumps({"status": "failed", "error": {"code": "checkpoint_hash_mismatch"}}), stderr="boom"),
    ])

    exit_code, report = run_all_figures.execute(output_dir=tmp_path / "out", stop_on_failure=True, command_runner=runner)

    assert exit_code == 1
    assert report["status"] == "FAILED"
    assert len(runner.commands) == 2
    assert report["stages"][-1]["exit_code"] == 4
    assert report["stages"][-1]["payload"]["error"]["code"] == "checkpoint_hash_mismatch"


def test_execute_runs_all_stages_after_a_failure_by_default(monkeypatch, tmp_path: Path) -> None:
    monkeypatch.setenv("FWM_REPRODUCE_LOG_DIR", str(tmp_path / "logs"))
    results = [_cmd(1, stdout="not json")] + [_cmd(0, stdout="{}") for _ in run_all_figures.STAGES[1:]]
    runner = _SequenceRunner(results)

    exit_code, report = run_all_figures.execute(output_dir=tmp_path / "out", command_runner=runner)

    assert exit_code == 1
    assert len(runner.commands) == len(run_all_figures.STAGES)
    assert report["stages"][0]["payload"] == {}
