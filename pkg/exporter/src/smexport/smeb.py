"""SMEB binary writer (bit-exact wire format shared with the engine).

Layout, all little-endian:

    magic   4 bytes  b"SMEB"
    version u32      1
    dim     u32
    rows    u64
    data    rows * dim float32

Sidecar index: one JSON object per row, in row order:

    {"row": n, "kind": "frame", "log_id": ..., "camera_id": ..., "ts_ns": ...}
    {"row": n, "kind": "text", "query_id": ...}

Files are written to a temporary sibling and atomically renamed.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

SMEB_MAGIC = b"SMEB"
SMEB_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


def default_index_path(smeb_path) -> Path:
    smeb_path = Path(smeb_path)
    if smeb_path.suffix == ".smeb":
        return smeb_path.with_suffix(".index.jsonl")
    return smeb_path.parent / (smeb_path.name + ".index.jsonl")


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.parent / (path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_store(vectors: np.ndarray, index_records: list[dict],
                smeb_path, index_path=None) -> None:
    """Write the matrix and its sidecar; rows and records must correspond."""
    smeb_path = Path(smeb_path)
    index_path = Path(index_path) if index_path else default_index_path(smeb_path)
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2:
        raise ValueError("vectors must be a 2-D matrix")
    rows, dim = vectors.shape
    if len(index_records) != rows:
        raise ValueError(f"{len(index_records)} index records for {rows} rows")
    payload = _HEADER.pack(SMEB_MAGIC, SMEB_VERSION, dim, rows) + vectors.tobytes()
    _atomic_write(smeb_path, payload)
    lines = "".join(json.dumps(rec) + "\n" for rec in index_records)
    _atomic_write(index_path, lines.encode("utf-8"))
