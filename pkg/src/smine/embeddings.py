"""Dense embedding store with the ``SMEB`` binary file format.

Layout (all little-endian):

    magic   4 bytes  b"SMEB"
    version u32      currently 1
    dim     u32
    rows    u64
    data    rows * dim float32

A line-delimited JSON sidecar maps rows to keys:

    {"row": 0, "kind": "frame", "log_id": ..., "camera_id": ..., "ts_ns": ...}
    {"row": 1, "kind": "text", "query_id": ...}

Several text rows sharing a ``query_id`` form that query's token matrix in
row order; a single row is the common pooled-embedding case.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidInputError, StoreError

SMEB_MAGIC = b"SMEB"
SMEB_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")

FrameKey = tuple[str, str, int]  # (log_id, camera_id, ts_ns)


@dataclass
class EmbeddingStore:
    """Row-major float32 vectors with frame and text indexes."""

    dim: int
    vectors: np.ndarray
    frame_index: dict[FrameKey, int] = field(default_factory=dict)
    text_index: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32).reshape(-1, self.dim)
        n = self.vectors.shape[0]
        for key, row in self.frame_index.items():
            if not 0 <= row < n:
                raise InvalidInputError(f"frame index entry {key} -> {row} out of range")
        for qid, rows in self.text_index.items():
            if any(not 0 <= r < n for r in rows):
                raise InvalidInputError(f"text index entry {qid} out of range")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def frame_vector(self, log_id: str, camera_id: str, ts_ns: int) -> np.ndarray:
        return self.vectors[self.frame_index[(log_id, camera_id, ts_ns)]]

    @cached_property
    def _frames_by_view(self) -> dict[tuple[str, str], np.ndarray]:
        by_view: dict[tuple[str, str], list[int]] = {}
        for (log_id, camera_id, ts_ns), _row in self.frame_index.items():
            by_view.setdefault((log_id, camera_id), []).append(ts_ns)
        return {k: np.array(sorted(v), dtype=np.int64) for k, v in by_view.items()}

    def frame_timestamps(self, log_id: str, camera_id: str) -> np.ndarray:
        """Sorted frame timestamps available for one (log, camera) view."""
        return self._frames_by_view.get((log_id, camera_id), np.empty(0, dtype=np.int64))

    def log_ids(self) -> tuple[str, ...]:
        return tuple(sorted({log_id for (log_id, _, _) in self.frame_index}))

    def has_log(self, log_id: str) -> bool:
        return any(k[0] == log_id for k in self.frame_index)

    def text_tokens(self, query_id: str) -> np.ndarray:
        """(M, dim) token matrix for a query, rows in stored order."""
        rows = self.text_index[query_id]
        return self.vectors[list(rows)]

    def text_vector(self, query_id: str) -> np.ndarray:
        """Pooled (mean) embedding for a query."""
        return self.text_tokens(query_id).mean(axis=0)


class StoreBuilder:
    """Accumulates rows, then freezes into an :class:`EmbeddingStore`."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise InvalidInputError("dim must be positive")
        self.dim = dim
        self._rows: list[np.ndarray] = []
        self._frame_index: dict[FrameKey, int] = {}
        self._text_index: dict[str, list[int]] = {}

    def _push(self, vec) -> int:
        vec = np.asarray(vec, dtype=np.float32).reshape(-1)
        if vec.shape != (self.dim,):
            raise InvalidInputError(f"expected dim {self.dim}, got {vec.shape}")
        self._rows.append(vec)
        return len(self._rows) - 1

    def add_frame(self, log_id: str, camera_id: str, ts_ns: int, vec) -> int:
        key = (log_id, camera_id, int(ts_ns))
        if key in self._frame_index:
            raise InvalidInputError(f"duplicate frame key {key}")
        row = self._push(vec)
        self._frame_index[key] = row
        return row

    def add_text(self, query_id: str, vec_or_tokens) -> tuple[int, ...]:
        tokens = np.asarray(vec_or_tokens, dtype=np.float32)
        if tokens.ndim == 1:
            tokens = tokens[None, :]
        rows = tuple(self._push(tok) for tok in tokens)
        self._text_index.setdefault(query_id, []).extend(rows)
        return rows

    def build(self) -> EmbeddingStore:
        vectors = (
            np.stack(self._rows) if self._rows else np.empty((0, self.dim), dtype=np.float32)
        )
        return EmbeddingStore(
            dim=self.dim,
            vectors=vectors,
            frame_index=dict(self._frame_index),
            text_index={k: tuple(v) for k, v in self._text_index.items()},
        )


def default_index_path(smeb_path) -> Path:
    smeb_path = Path(smeb_path)
    if smeb_path.suffix == ".smeb":
        return smeb_path.with_suffix(".index.jsonl")
    return smeb_path.parent / (smeb_path.name + ".index.jsonl")


def write_smeb(vectors: np.ndarray, path) -> None:
    """Write the bare binary matrix (no sidecar)."""
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2:
        raise InvalidInputError("vectors must be a 2-D matrix")
    rows, dim = vectors.shape
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(SMEB_MAGIC, SMEB_VERSION, dim, rows))
        fh.write(vectors.tobytes())


def read_smeb(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read embedding file {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise StoreError(f"{path}: truncated header")
    magic, version, dim, rows = _HEADER.unpack_from(raw)
    if magic != SMEB_MAGIC:
        raise StoreError(f"{path}: bad magic {magic!r}")
    if version != SMEB_VERSION:
        raise StoreError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + rows * dim * 4
    if len(raw) != expected:
        raise StoreError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return data.reshape(rows, dim)


def save_store(store: EmbeddingStore, smeb_path, index_path=None) -> None:
    smeb_path = Path(smeb_path)
    index_path = Path(index_path) if index_path else default_index_path(smeb_path)
    write_smeb(store.vectors, smeb_path)
    records = []
    for (log_id, camera_id, ts_ns), row in store.frame_index.items():
        records.append(
            {"row": row, "kind": "frame", "log_id": log_id, "camera_id": camera_id, "ts_ns": ts_ns}
        )
    for query_id, rows in store.text_index.items():
        for row in rows:
            records.append({"row": row, "kind": "text", "query_id": query_id})
    records.sort(key=lambda r: r["row"])
    with index_path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def load_store(smeb_path, index_path=None) -> EmbeddingStore:
    smeb_path = Path(smeb_path)
    index_path = Path(index_path) if index_path else default_index_path(smeb_path)
    vectors = read_smeb(smeb_path)
    frame_index: dict[FrameKey, int] = {}
    text_rows: dict[str, list[int]] = {}
    try:
        with index_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec["kind"] == "frame":
                    frame_index[(rec["log_id"], rec["camera_id"], int(rec["ts_ns"]))] = rec["row"]
                elif rec["kind"] == "text":
                    text_rows.setdefault(rec["query_id"], []).append(rec["row"])
                else:
                    raise StoreError(f"{index_path}: unknown row kind {rec['kind']!r}")
    except OSError as exc:
        raise DataError(f"cannot read sidecar index {index_path}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise StoreError(f"{index_path}: malformed index record: {exc}") from exc
    text_index = {k: tuple(sorted(v)) for k, v in text_rows.items()}
    return EmbeddingStore(
        dim=int(vectors.shape[1]),
        vectors=vectors,
        frame_index=frame_index,
        text_index=text_index,
    )
