"""Utilities for writing run artifacts in JSON and Markdown."""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from app.reporting.summary import disposition


def _json_default(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, bytes):
        return value.hex()
    return str(value)


def write_run_outputs(
    *,
    artifacts_dir: str | Path,
    command: str,
    run_id: str,
    summary: dict[str, Any],
    records: list[dict[str, Any]],
    findings: list[str] | None = None,
    headline: dict[str, Any] | None = None,
) -> tuple[Path, Path]:
    """Write ``summary_<command>_<run_id>.json`` and ``report_<command>_<run_id>.md``."""
    findings = list(findings or [])
    out_dir = Path(artifacts_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"summary_{command}_{run_id}.json"
    md_path = out_dir / f"report_{command}_{run_id}.md"
    status = disposition(summary, findings)
    created = datetime.now(timezone.utc).replace(microsecond=0).isoformat().replace("+00:00", "Z")

    payload = {
        "command": command,
        "run_id": run_id,
        "created_at": created,
        "disposition": status,
        "headline": headline or {},
        "summary": summary,
        "findings": findings,
        "records": records,
    }
    json_path.write_text(json.dumps(payload, indent=2, default=_json_default), encoding="utf-8")

    md_lines = [
        f"# Run Report: {command} ({run_id})",
        "",
        f"Disposition: **{status}**",
        "",
        "## Summary",
        f"- Items: {summary['total_items']}",
        f"- Completed: {summary['completed']}",
        f"- Flagged: {summary['flagged']['total']}",
        f"- Failed: {summary['failed']['total']}",
    ]
    for key, value in (headline or {}).items():
        md_lines.append(f"- {key}: {value}")

    md_lines.extend(["", "## Findings"])
    if findings:
        md_lines.extend(f"- {finding}" for finding in findings)
    else:
        md_lines.append("- none")

    md_lines.extend(["", "## Failed Reasons"])
    if summary["failed"]["reasons"]:
        for reason, count in summary["failed"]["reasons"].items():
            md_lines.append(f"- {reason}: {count}")
    else:
        md_lines.append("- none")

    md_lines.extend(["", "## Records", ""])
    for record in records:
        label = record.get("item", "")
        state = record.get("status", "")
        reason = record.get("reason")
        reason_part = f" ({reason})" if reason else ""
        md_lines.append(f"- {label}: {state}{reason_part}")

    md_path.write_text("\n".join(md_lines) + "\n", encoding="utf-8")
    return json_path, md_path
