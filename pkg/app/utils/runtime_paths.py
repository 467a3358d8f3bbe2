from __future__ import annotations

import os
from pathlib import Path
import tempfile


def runtime_root() -> Path:
    configured = os.getenv("FWM_RUNTIME_ROOT", "").strip()
    if configured:
        return Path(configured)
    return Path(tempfile.gettempdir()) / "fwm-interferometry-sim"


def runtime_path(*parts: str) -> Path:
    return runtime_root().joinpath(*parts)


def artifact_root() -> Path:
    configured = os.getenv("FWM_ARTIFACT_ROOT", "").strip()
    if configured:
        return Path(configured)
    return runtime_path("artifacts", "runs")
