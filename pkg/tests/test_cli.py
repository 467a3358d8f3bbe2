from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np
import pytest

from app.config import ExperimentConfig
from app.domain.models import PopulationScan, SweepResult
from app.jobs import cli, selftest
from app.jobs.cli import split_command
from app.jobs.common import load_run_config
from app.reporting.csv_export import read_table


def _payload(capsys) -> dict:
    lines = [line for line in capsys.readouterr().out.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


@pytest.fixture(autouse=True)
def _isolated_runtime(tmp_path, monkeypatch) -> None:
    monkeypatch.setenv("FWM_RUNTIME_ROOT", str(tmp_path / "runtime"))
    for name in ("FWM_SEED", "FWM_THREADS", "FWM_CONFIG_PATH", "FWM_ARTIFACT_ROOT"):
        monkeypatch.delenv(name, raising=False)


@pytest.mark.parametrize(
    ("argv", "expected"),
    [
        (["prepare", "--seed", "3"], ("prepare", ["--seed", "3"])),
        (["--config", "c.json", "interfere", "--json-output"], ("interfere", ["--json-output", "--config", "c.json"])),
        (["--seed", "5", "scan-fwm"], ("scan-fwm", ["--seed", "5"])),
        (["--config", "prepare", "selftest"], ("selftest", ["--config", "prepare"])),
        (["--json-output"], (None, ["--json-output"])),
    ],
)
def test_split_command_accepts_globals_on_either_side(argv: list[str], expected: tuple) -> None:
    assert split_command(argv) == expected


def test_missing_subcommand_prints_usage(capsys) -> None:
    assert cli.main([]) == 2
    assert "usage" in capsys.readouterr().err
    assert cli.main(["--help"]) == 0


def test_prepare_then_interfere_from_checkpoint(write_config, tmp_path, capsys) -> None:
    config = write_config()
    checkpoint = tmp_path / "prepared.ckpt"

    assert cli.main(["--config", str(config), "prepare", "--checkpoint", str(checkpoint), "--json-output"]) == 0
    prepared = _payload(capsys)
    assert prepared["status"] == "ok"
    assert prepared["n_traj"] == 64
    assert Path(prepared["checkpoint"]) == checkpoint
    assert checkpoint.exists()

    code = cli.main(["interfere", "--config", str(config), "--checkpoint", str(checkpoint), "--json-output"])
    assert code == 0
    result = _payload(capsys)
    assert result["model"] == "fourmode"
    assert set(result["phases"]) >= {"phi0L", "phi0R", "phi1L", "phi1R"}
    header, rows = read_table(result["interfere_csv"])
    assert header["command"] == "interfere"
    assert len(rows) == 32
    summary = json.loads(Path(result["summary_json"]).read_text(encoding="utf-8"))
    assert summary["command"] == "interfere"
    assert summary["summary"]["total_items"] == 32


def test_stale_checkpoint_exits_with_checkpoint_code(write_config, tmp_path, capsys) -> None:
    checkpoint = tmp_path / "prepared.ckpt"
    assert cli.main(["prepare", "--config", str(write_config()), "--checkpoint", str(checkpoint)]) == 0
    capsys.readouterr()

    changed = write_config(n_traj=32)
    code = cli.main(["interfere", "--config", str(changed), "--checkpoint", str(checkpoint), "--json-output"])

    assert code == 4
    assert _payload(capsys)["error"]["code"] == "checkpoint_hash_mismatch"


def test_invalid_config_exits_with_config_code(write_config, capsys) -> None:
    code = cli.main(["prepare", "--config", str(write_config(n_traj=1)), "--json-output"])

    assert code == 2
    payload = _payload(capsys)
    assert payload["status"] == "failed"
    assert "invalid_n_traj" in payload["error"]["details"]["codes"]


def test_prepare_uses_the_runtime_checkpoint_directory(write_config, tmp_path, capsys) -> None:
    assert cli.main(["prepare", "--config", str(write_config()), "--json-output"]) == 0

    checkpoint = Path(_payload(capsys)["checkpoint"])
    assert checkpoint.parent == tmp_path / "runtime" / "checkpoints"
    assert checkpoint.name.startswith("prepared_fourmode_")


def test_scan_writes_one_row_per_time(write_config, capsys) -> None:
    code = cli.main(["scan-fwm", "--config", str(write_config()), "--model", "fourmode", "--json-output"])

    assert code == 0
    payload = _payload(capsys)
    header, rows = read_table(payload["scan_csv"])
    assert header["command"] == "scan-fwm"
    assert [float(row["t_fwm_s"]) for row in rows] == pytest.approx([0.0, 1e-5, 2e-5])
    assert float(rows[0]["v_aR_bL"]) == pytest.approx(1.0, abs=0.5)
    assert "fourmode min v_aR_bL" in payload


def test_seed_override_changes_the_run_id(write_config, capsys) -> None:
    config = str(write_config())
    cli.main(["prepare", "--config", config, "--json-output"])
    first = _payload(capsys)["summary_json"]
    cli.main(["--seed", "8", "prepare", "--config", config, "--json-output"])
    second = _payload(capsys)["summary_json"]

    assert first != second
    assert second.endswith("-8.json")


def test_quick_selftest_runs_every_oracle(write_config, tmp_path) -> None:
    config = load_run_config(argparse.Namespace(config=str(write_config()), seed=None, threads=None))

    result = selftest.run(config=config, artifacts_dir=str(tmp_path / "selftest"))

    assert set(result["checks"]) == set(selftest.QUICK_CHECKS)
    for name in ("undepleted_oracle", "time_scale", "balance_root", "checkpoint_round_trip", "packet_separation"):
        assert result["checks"][name], name


def _scan(model: str, v: list[float], nt_chi: float = 10.0) -> PopulationScan:
    times = np.linspace(0.0, 0.5, len(v))
    values = np.array(v)
    empty = np.zeros((len(v), 4))
    return PopulationScan(model, times, nt_chi, empty, {"aR_bL": values}, {"aR_bL": 0.01 * values}, times, values)


@pytest.mark.parametrize(
    ("multimode_v", "passed"),
    [
        ([1.0, 0.5, 0.3, 0.2, 0.1, 0.4], True),
        ([1.0, 0.6, 0.3, 0.2, 0.1, 0.4], False),
        ([1.0, 0.5, 0.3, 0.2, 0.01, 0.4], False),
        ([1.0, 0.5, 0.3, 0.1, 0.4, 0.3], False),
    ],
)
def test_multimode_scan_acceptance_bounds(monkeypatch, multimode_v: list[float], passed: bool) -> None:
    four_mode = _scan("fourmode", [1.0, 0.52, 0.28, 0.1, 0.03, 0.01])
    monkeypatch.setattr(selftest, "multimode_setup", lambda config: None)
    monkeypatch.setattr(selftest, "four_mode_scan", lambda *args, **kwargs: four_mode)
    monkeypatch.setattr(selftest, "multimode_scan", lambda *args, **kwargs: (_scan("multimode1d", multimode_v), {}))
    config = ExperimentConfig()

    outcome = selftest.accept_multimode_scan(config)

    # Steps of 1 in N_t chi t: the minimum must sit at 4 or 5, early points within 10% of four-mode.
    assert outcome["passed"] is passed


@pytest.mark.parametrize(("v_min", "passed"), [(0.01, True), (0.04, False), (0.002, False)])
def test_four_mode_scan_acceptance_bounds(monkeypatch, v_min: float, passed: bool) -> None:
    scan = _scan("fourmode", [1.0, 0.5, 0.3, 0.2, 0.1, v_min], nt_chi=20.0)
    monkeypatch.setattr(selftest, "four_mode_scan", lambda *args, **kwargs: scan)

    outcome = selftest.accept_four_mode_scan(ExperimentConfig())

    assert outcome["nt_chi_t"] == pytest.approx(10.0)
    assert outcome["passed"] is passed


@pytest.mark.parametrize(("excess", "passed"), [(0.1, True), (0.2, False)])
def test_shot_noise_control_checks_every_readout_phase(monkeypatch, excess: float, passed: bool) -> None:
    ratio = np.ones(8)
    ratio[5] += excess
    sweep = SweepResult(
        phi2_values=2.0 * np.pi * np.arange(8) / 8,
        mean_S=np.zeros(8),
        var_S=100.0 * ratio,
        delta_phi=np.full(8, 0.1),
        populations=np.full((8, 4), 25.0),
        N_t=100.0,
        visibility=1.0,
        visibility_aL=1.0,
    )
    monkeypatch.setattr(selftest, "build_prepared", lambda config: None)
    monkeypatch.setattr(selftest, "prepare_sequence", lambda prepared, grid: (None, sweep))

    # 2000 trajectories: five standard errors of a sample variance is about 0.16.
    outcome = selftest.check_shot_noise_control(ExperimentConfig())

    assert outcome["worst_variance_ratio_error"] == pytest.approx(excess)
    assert outcome["passed"] is passed


SMALL_MULTIMODE = {
    "model": "multimode1d",
    "n_traj": 8,
    "seeds": {"N_aL0": 1000, "N_aR0": 10, "N_bL0": 10, "N_bR0": 1000},
    "multimode": {
        "k0": "2 1/um",
        "t_separation": "40 ms",
        "x0": "29 um",
        "interaction_mode": "physical",
        "ground_state": "noninteracting",
        "grid_points": 256,
        "grid_length": "200 um",
        "dt": "1 us",
        "dt_imag": "0.1 ms",
        "max_imag_steps": 40000,
        "density_times": [],
        "separation_window": "2 um",
        "chunk_size": 4,
    },
}


def test_multimode_prepare_then_interfere(write_config, tmp_path, capsys) -> None:
    config = write_config(**SMALL_MULTIMODE)
    checkpoint = tmp_path / "multimode.ckpt"

    assert cli.main(["prepare", "--config", str(config), "--checkpoint", str(checkpoint), "--json-output"]) == 0
    prepared = _payload(capsys)
    assert prepared["model"] == "multimode1d"
    assert prepared["overlap"] < 5e-3

    assert cli.main(["interfere", "--config", str(config), "--checkpoint", str(checkpoint), "--json-output"]) == 0
    result = _payload(capsys)
    assert result["model"] == "multimode1d"
    _, rows = read_table(result["interfere_csv"])
    assert len(rows) == 32


@pytest.mark.slow
def test_multimode_sample_config_separates_cleanly(tmp_path, capsys) -> None:
    sample_path = Path(__file__).resolve().parents[1] / "docs" / "samples" / "multimode.example.json"
    sample = json.loads(sample_path.read_text(encoding="utf-8"))
    sample["n_traj"] = 16
    sample["output"] = {"directory": str(tmp_path / "artifacts")}
    config = tmp_path / "multimode.json"
    config.write_text(json.dumps(sample), encoding="utf-8")

    code = cli.main(["prepare", "--config", str(config), "--checkpoint", str(tmp_path / "m.ckpt"), "--json-output"])

    payload = _payload(capsys)
    assert code == 0, payload
    assert payload["overlap"] < 5e-3
