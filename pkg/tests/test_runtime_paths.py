from __future__ import annotations

import tempfile
from pathlib import Path

from app.utils.runtime_paths import artifact_root, runtime_path, runtime_root


def test_runtime_root_uses_env_override(monkeypatch) -> None:
    monkeypatch.setenv("FWM_RUNTIME_ROOT", "/custom/runtime/root")
    assert runtime_root() == Path("/custom/runtime/root")


def test_runtime_root_defaults_to_system_temp(monkeypatch) -> None:
    monkeypatch.delenv("FWM_RUNTIME_ROOT", raising=False)
    assert runtime_root() == Path(tempfile.gettempdir()) / "fwm-interferometry-sim"


def test_runtime_path_joins_parts(monkeypatch) -> None:
    monkeypatch.setenv("FWM_RUNTIME_ROOT", "/custom/runtime/root")
    assert runtime_path("checkpoints", "prepared.ckpt") == Path("/custom/runtime/root/checkpoints/prepared.ckpt")


def test_artifact_root_prefers_its_own_override(monkeypatch) -> None:
    monkeypatch.setenv("FWM_RUNTIME_ROOT", "/custom/runtime/root")
    monkeypatch.delenv("FWM_ARTIFACT_ROOT", raising=False)
    assert artifact_root() == Path("/custom/runtime/root/artifacts/runs")

    monkeypatch.setenv("FWM_ARTIFACT_ROOT", "/elsewhere")
    assert artifact_root() == Path("/elsewhere")
