from __future__ import annotations

import hashlib
import json
from typing import Any

DIGEST_SIZE = 32


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def params_digest(payload: Any) -> bytes:
    """Return the 32-byte sha256 digest of a canonical JSON payload."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).digest()


def short_token(digest: bytes) -> str:
    """Return a short printable token for logs and file names."""
    if not digest:
        return ""
    return digest.hex()[:12]


def build_run_id(command: str, digest: bytes, seed: int) -> str:
    return f"{command}-{short_token(digest)}-{seed}"
