"""Export jobs: scan media, encode, and emit the SMEB store + sidecar.

Frames are discovered under ``frames_dir/<log_id>/<camera_id>/<ts_ns>.<ext>``
and exported in sorted (log, camera, timestamp) order; texts come from a
JSONL file of {"query_id", "text"} records in file order.  Unreadable media
are skipped with a warning record; a row whose encoder output does not match
the declared dimension aborts the job.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .smeb import default_index_path, write_store

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class ExportJob:
    encoder: object
    frames_dir: str = ""
    texts_file: str = ""
    out_path: str = "embeddings.smeb"
    text_tokens: bool = False
    max_text_tokens: int = 16


@dataclass
class ExportReport:
    rows: int = 0
    frames: int = 0
    texts: int = 0
    dim: int = 0
    warnings: list[str] = field(default_factory=list)
    smeb_path: str = ""
    index_path: str = ""


def _scan_frames(frames_dir: Path):
    entries = []
    for log_dir in sorted(p for p in frames_dir.iterdir() if p.is_dir()):
        for cam_dir in sorted(p for p in log_dir.iterdir() if p.is_dir()):
            for file in sorted(cam_dir.iterdir()):
                if file.suffix.lower() not in IMAGE_SUFFIXES:
                    continue
                try:
                    ts_ns = int(file.stem)
                except ValueError:
                    entries.append((None, None, None, file, "bad timestamp filename"))
                    continue
                entries.append((log_dir.name, cam_dir.name, ts_ns, file, None))
    return entries


def _read_texts(texts_file: Path):
    records = []
    with texts_file.open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            records.append((str(rec["query_id"]), str(rec["text"])))
    return records


def export(job: ExportJob) -> ExportReport:
    report = ExportReport()
    rows: list[np.ndarray] = []
    index: list[dict] = []
    dim = None

    def push(vec: np.ndarray, record: dict):
        nonlocal dim
        vec = np.asarray(vec, dtype=np.float32).reshape(-1)
        if dim is None:
            dim = int(vec.shape[0])
            declared = getattr(job.encoder, "dim", dim)
            if declared != dim:
                raise RuntimeError(
                    f"encoder declares dim {declared} but produced {dim}"
                )
        elif vec.shape[0] != dim:
            raise RuntimeError(
                f"dim mismatch: expected {dim}, encoder produced {vec.shape[0]}"
            )
        record["row"] = len(rows)
        rows.append(vec)
        index.append(record)

    if job.frames_dir:
        frames_dir = Path(job.frames_dir)
        if not frames_dir.is_dir():
            raise FileNotFoundError(f"frames directory {frames_dir} does not exist")
        for log_id, camera_id, ts_ns, file, problem in _scan_frames(frames_dir):
            if problem is not None:
                report.warnings.append(f"skipped {file}: {problem}")
                continue
            try:
                vec = job.encoder.encode_image(file)
            except Exception as exc:
                report.warnings.append(f"skipped {file}: {exc}")
                continue
            push(vec, {"kind": "frame", "log_id": log_id,
                       "camera_id": camera_id, "ts_ns": ts_ns})
            report.frames += 1

    if job.texts_file:
        for query_id, text in _read_texts(Path(job.texts_file)):
            if job.text_tokens:
                tokens = job.encoder.encode_text_tokens(text, job.max_text_tokens)
            else:
                tokens = job.encoder.encode_text(text)[None, :]
            for tok in tokens:
                push(tok, {"kind": "text", "query_id": query_id})
            report.texts += 1

    dim = dim if dim is not None else getattr(job.encoder, "dim", 0)
    matrix = (np.stack(rows) if rows else np.empty((0, dim), dtype=np.float32))
    smeb_path = Path(job.out_path)
    index_path = default_index_path(smeb_path)
    write_store(matrix, index, smeb_path, index_path)
    report.rows = len(rows)
    report.dim = dim
    report.smeb_path = str(smeb_path)
    report.index_path = str(index_path)
    return report
