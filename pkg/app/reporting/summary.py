"""Summary generation for run reports."""

from __future__ import annotations

from collections import Counter
from typing import Any


def compute_summary(records: list[dict[str, Any]], total_items: int) -> dict[str, Any]:
    """Aggregate per-item records (one per time point, epsilon or check) into counts."""
    status_counts = Counter(record.get("status") for record in records)
    failed_reasons = Counter(
        record.get("reason", "unknown")
        for record in records
        if record.get("status") == "failed"
    )
    flagged_reasons = Counter(
        record.get("reason", "unknown")
        for record in records
        if record.get("status") == "flagged"
    )

    return {
        "total_items": total_items,
        "completed": status_counts.get("ok", 0) + status_counts.get("flagged", 0),
        "ok": status_counts.get("ok", 0),
        "flagged": {
            "total": status_counts.get("flagged", 0),
            "reasons": dict(flagged_reasons),
        },
        "failed": {
            "total": status_counts.get("failed", 0),
            "reasons": dict(failed_reasons),
        },
    }


def disposition(summary: dict[str, Any], findings: list[str]) -> str:
    if findings or summary["failed"]["total"] or summary["flagged"]["total"]:
        return "REVIEW_REQUIRED"
    return "SUCCESS"
