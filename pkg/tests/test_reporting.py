from __future__ import annotations

import json

import numpy as np

from app.reporting.run_report import write_run_outputs
from app.reporting.summary import compute_summary, disposition


def _records() -> list[dict]:
    return [
        {"item": "fourmode t=0.0000e+00s", "status": "flagged", "reason": "v_aR_bL_undefined"},
        {"item": "fourmode t=1.0000e-04s", "status": "ok"},
        {"item": "fwm eps=+0.5000", "status": "failed", "reason": "four_mode_divergence"},
    ]


def test_summary_counts_statuses_and_reasons() -> None:
    summary = compute_summary(_records(), total_items=3)

    assert summary["completed"] == 2
    assert summary["ok"] == 1
    assert summary["flagged"] == {"total": 1, "reasons": {"v_aR_bL_undefined": 1}}
    assert summary["failed"] == {"total": 1, "reasons": {"four_mode_divergence": 1}}


def test_disposition_requires_review_for_findings_or_problems() -> None:
    clean = compute_summary([{"item": "a", "status": "ok"}], total_items=1)

    assert disposition(clean, []) == "SUCCESS"
    assert disposition(clean, ["sensitivity 1.2 is not below the shot-noise limit"]) == "REVIEW_REQUIRED"
    assert disposition(compute_summary(_records(), total_items=3), []) == "REVIEW_REQUIRED"


def test_run_outputs_serialise_arrays_and_list_records(tmp_path) -> None:
    records = _records()
    json_path, md_path = write_run_outputs(
        artifacts_dir=tmp_path / "runs",
        command="scan-fwm",
        run_id="scan-fwm-abc-7",
        summary=compute_summary(records, total_items=3),
        records=records,
        findings=[],
        headline={"fourmode min v_aR_bL": np.float64(0.04), "populations": np.array([1.0, 2.0])},
    )

    payload = json.loads(json_path.read_text(encoding="utf-8"))
    assert json_path.name == "summary_scan-fwm_scan-fwm-abc-7.json"
    assert payload["headline"]["populations"] == [1.0, 2.0]
    assert payload["disposition"] == "REVIEW_REQUIRED"

    markdown = md_path.read_text(encoding="utf-8")
    assert "- fourmode t=0.0000e+00s: flagged (v_aR_bL_undefined)" in markdown
    assert "- four_mode_divergence: 1" in markdown
    assert "## Findings\n- none" in markdown
