"""Binary checkpoint of a prepared ensemble.

Layout (little endian): magic, u32 version, 32-byte preparation hash,
u64 seed, u64 created-at unix seconds, u32 metadata length, UTF-8 JSON
metadata, then each array as f64 data in metadata order. Complex arrays are
stored as interleaved real/imaginary pairs.
"""

from __future__ import annotations

import json
import struct
import time
from pathlib import Path
from typing import Any

import numpy as np

from app.domain.errors import CheckpointError
from app.interferometry.pulses import PreparedEnsemble
from app.utils.hashing import DIGEST_SIZE, short_token

MAGIC = b"FWMCKPT\x00"
VERSION = 1
_HEADER = struct.Struct("<8sI32sQQI")


def _array_spec(name: str, array: np.ndarray) -> dict[str, Any]:
    return {"name": name, "shape": list(array.shape), "dtype": "complex128" if np.iscomplexobj(array) else "float64"}


def _encode(array: np.ndarray) -> bytes:
    if np.iscomplexobj(array):
        array = np.ascontiguousarray(array, dtype="<c16").view("<f8")
    return np.ascontiguousarray(array, dtype="<f8").tobytes()


def write_checkpoint(
    path: str | Path,
    prepared: PreparedEnsemble,
    *,
    preparation_hash: bytes,
    seed: int,
    extra: dict[str, Any] | None = None,
) -> Path:
    if len(preparation_hash) != DIGEST_SIZE:
        raise CheckpointError("invalid_hash", "Preparation hash must be 32 bytes.", {"length": len(preparation_hash)})
    arrays: dict[str, np.ndarray] = {"coherences": prepared.coherences}
    if prepared.density is not None:
        arrays["density"] = np.asarray(prepared.density, dtype=float)

    populations = prepared.populations().mean(axis=0)
    metadata = {
        "arrays": [_array_spec(name, array) for name, array in arrays.items()],
        "model": prepared.model,
        "vacuum_modes": list(prepared.vacuum_modes),
        "t_fwm": prepared.t_fwm,
        "overlap": prepared.overlap,
        "mean_N_t": float(populations.sum()),
        **(extra or {}),
    }
    meta_bytes = json.dumps(metadata, sort_keys=True).encode("utf-8")
    header = _HEADER.pack(MAGIC, VERSION, preparation_hash, int(seed), int(time.time()), len(meta_bytes))

    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("wb") as handle:
        handle.write(header)
        handle.write(meta_bytes)
        for array in arrays.values():
            handle.write(_encode(array))
    return out


def read_checkpoint(path: str | Path, *, expected_hash: bytes | None = None) -> tuple[PreparedEnsemble, dict[str, Any]]:
    """Load a checkpoint; raise CheckpointError on any layout or hash problem."""
    source = Path(path)
    if not source.exists():
        raise CheckpointError("checkpoint_not_found", f"Checkpoint not found: {source}", {"path": str(source)})
    data = source.read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError("checkpoint_truncated", "Checkpoint header is truncated.", {"size": len(data)})

    magic, version, stored_hash, seed, created_at, meta_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("checkpoint_bad_magic", "File is not an ensemble checkpoint.", {"magic": magic.hex()})
    if version != VERSION:
        raise CheckpointError("checkpoint_bad_version", f"Unsupported checkpoint version {version}.", {"version": version})
    if expected_hash is not None and stored_hash != expected_hash:
        raise CheckpointError(
            "checkpoint_hash_mismatch",
            "Checkpoint was prepared with a different configuration.",
            {"stored": short_token(stored_hash), "expected": short_token(expected_hash)},
        )

    offset = _HEADER.size
    if len(data) < offset + meta_len:
        raise CheckpointError("checkpoint_truncated", "Checkpoint metadata is truncated.", {})
    try:
        metadata = json.loads(data[offset : offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("checkpoint_bad_metadata", "Checkpoint metadata is not valid JSON.", {}) from exc
    offset += meta_len

    arrays: dict[str, np.ndarray] = {}
    for spec in metadata.get("arrays", []):
        shape = tuple(spec["shape"])
        complex_valued = spec["dtype"] == "complex128"
        count = int(np.prod(shape, dtype=np.int64)) * (2 if complex_valued else 1)
        size = 8 * count
        if len(data) < offset + size:
            raise CheckpointError("checkpoint_truncated", f"Array '{spec['name']}' is truncated.", {"array": spec["name"]})
        flat = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += size
        arrays[spec["name"]] = flat.view("<c16").reshape(shape).copy() if complex_valued else flat.reshape(shape).copy()
    if "coherences" not in arrays:
        raise CheckpointError("checkpoint_missing_array", "Checkpoint holds no coherences.", {})

    prepared = PreparedEnsemble(
        model=metadata["model"],
        coherences=arrays["coherences"],
        vacuum_modes=tuple(float(m) for m in metadata["vacuum_modes"]),
        t_fwm=float(metadata["t_fwm"]),
        rng_seed=int(seed),
        overlap=float(metadata.get("overlap", 0.0)),
        density=arrays.get("density"),
    )
    info = {
        "preparation_hash": stored_hash,
        "seed": int(seed),
        "created_at": int(created_at),
        "metadata": metadata,
    }
    return prepared, info
