"""Knowledge base of validated {query, embedding, mask, program} triples.

Ingestion enforces a strict gate: a candidate's program must re-produce its
ground-truth mask exactly on the referenced log before the triple becomes
retrievable.  Retrieval is exact full-scan KNN by cosine similarity; store
sizes here stay small enough (<= 10^4) that an approximate index would only
add a correctness variable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .dsl import Catalog, evaluate, parse
from .embeddings import read_smeb, write_smeb
from .errors import (
    DataError,
    DslError,
    InvalidInputError,
    StoreError,
    UndefinedSimilarityError,
)
from .mask import ScenarioMask
from .tracks import LogManifest

KB_VERSION = 1

TRIPLES_FILE = "triples.jsonl"
EMBEDDINGS_FILE = "embeddings.smeb"
META_FILE = "meta.json"


@dataclass(frozen=True, eq=False)
class KnowledgeTriple:
    """One validated mining case."""

    triple_id: str
    query_text: str
    query_embedding: np.ndarray  # sentence-embedding space (dim d')
    log_id: str
    mask: ScenarioMask
    program_source: str
    validated: bool = False
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(
            self, "query_embedding", np.asarray(self.query_embedding, dtype=np.float32)
        )

    def __eq__(self, other):
        if not isinstance(other, KnowledgeTriple):
            return NotImplemented
        return (
            self.triple_id == other.triple_id
            and self.query_text == other.query_text
            and self.query_embedding.tobytes() == other.query_embedding.tobytes()
            and self.log_id == other.log_id
            and self.mask == other.mask
            and self.program_source == other.program_source
            and self.validated == other.validated
            and self.provenance == other.provenance
        )

    def __hash__(self):
        return hash((self.triple_id, self.query_text, self.program_source))


@dataclass(frozen=True)
class IngestResult:
    triple_id: str
    accepted: bool
    reason: Optional[str] = None
    diff_size: Optional[int] = None


class KnowledgeBase:
    """Many concurrent readers, single writer; batches commit atomically."""

    def __init__(self, dim: int, catalog: Optional[Catalog] = None):
        if dim <= 0:
            raise InvalidInputError("embedding dim must be positive")
        self.dim = dim
        self.catalog = catalog
        self._triples: tuple[KnowledgeTriple, ...] = ()
        self._matrix: np.ndarray = np.empty((0, dim), dtype=np.float32)

    def __len__(self) -> int:
        return len(self._triples)

    @property
    def triples(self) -> tuple[KnowledgeTriple, ...]:
        return self._triples

    def get(self, triple_id: str) -> KnowledgeTriple:
        for t in self._triples:
            if t.triple_id == triple_id:
                return t
        raise KeyError(triple_id)

    # -- ingestion gate ---------------------------------------------------

    def validate_candidate(
        self, candidate: KnowledgeTriple, log: LogManifest
    ) -> IngestResult:
        """Check one candidate without committing it."""
        if any(t.triple_id == candidate.triple_id for t in self._triples):
            return IngestResult(candidate.triple_id, False, reason="duplicate triple_id")
        if candidate.query_embedding.shape != (self.dim,):
            return IngestResult(
                candidate.triple_id, False,
                reason=f"embedding dim {candidate.query_embedding.shape} != ({self.dim},)",
            )
        if log.log_id != candidate.log_id:
            return IngestResult(
                candidate.triple_id, False,
                reason=f"log {log.log_id!r} does not match triple log {candidate.log_id!r}",
            )
        missing = set(candidate.mask.track_ids(candidate.log_id)) - set(log.tracks_by_id)
        if missing:
            return IngestResult(
                candidate.triple_id, False,
                reason=f"mask references unknown tracks {sorted(missing)}",
            )
        try:
            program = parse(candidate.program_source, catalog=self.catalog)
        except DslError as exc:
            return IngestResult(candidate.triple_id, False, reason=f"parse failure: {exc}")
        produced = evaluate(program, log, catalog=self.catalog)
        diff = produced.symmetric_difference_size(candidate.mask)
        if diff != 0:
            return IngestResult(
                candidate.triple_id, False,
                reason=f"evaluation mismatch: symmetric difference {diff}",
                diff_size=diff,
            )
        return IngestResult(candidate.triple_id, True)

    def insert_validated(
        self, candidate: KnowledgeTriple, log: LogManifest
    ) -> IngestResult:
        """Accept the candidate iff its program reproduces the mask exactly."""
        result = self.validate_candidate(candidate, log)
        if result.accepted:
            self._commit([replace(candidate, validated=True)])
        return result

    def insert_batch(
        self, candidates: Iterable[tuple[KnowledgeTriple, LogManifest]]
    ) -> list[IngestResult]:
        """Validate a batch, then commit all accepted triples in one swap."""
        results = []
        accepted = []
        for candidate, log in candidates:
            result = self.validate_candidate(candidate, log)
            if result.accepted and all(
                a.triple_id != candidate.triple_id for a in accepted
            ):
                accepted.append(replace(candidate, validated=True))
            elif result.accepted:
                result = IngestResult(candidate.triple_id, False, reason="duplicate triple_id")
            results.append(result)
        if accepted:
            self._commit(accepted)
        return results

    def _commit(self, triples: list[KnowledgeTriple]) -> None:
        matrix = np.concatenate(
            [self._matrix, np.stack([t.query_embedding for t in triples])], axis=0
        )
        # single reference swap: readers see the old or the new store
        self._triples, self._matrix = self._triples + tuple(triples), matrix

    def revalidate(self, logs: dict[str, LogManifest]) -> list[IngestResult]:
        """Re-run the gate for every stored triple against its stored log."""
        results = []
        for t in self._triples:
            if t.log_id not in logs:
                results.append(IngestResult(t.triple_id, False, reason="log unavailable"))
                continue
            program = parse(t.program_source, catalog=self.catalog)
            produced = evaluate(program, logs[t.log_id], catalog=self.catalog)
            diff = produced.symmetric_difference_size(t.mask)
            if diff == 0:
                results.append(IngestResult(t.triple_id, True))
            else:
                results.append(IngestResult(
                    t.triple_id, False,
                    reason=f"evaluation mismatch: symmetric difference {diff}",
                    diff_size=diff,
                ))
        return results

    # -- retrieval ----------------------------------------------------------

    def knn_retrieve(self, query_embedding, k: int) -> list[tuple[KnowledgeTriple, float]]:
        """Exact top-k triples by cosine similarity, descending; ties break
        by triple_id; k is clipped to the store size."""
        if len(self._triples) == 0:
            raise InvalidInputError("knowledge base is empty")
        if k < 1:
            raise InvalidInputError("k must be >= 1")
        q = np.asarray(query_embedding, dtype=np.float64).reshape(-1)
        if q.shape != (self.dim,):
            raise InvalidInputError(f"query dim {q.shape} != ({self.dim},)")
        qn = np.linalg.norm(q)
        if qn == 0.0:
            raise UndefinedSimilarityError("zero query vector")
        mat = self._matrix.astype(np.float64)
        norms = np.linalg.norm(mat, axis=1)
        if np.any(norms == 0.0):
            raise UndefinedSimilarityError("stored embedding with zero norm")
        sims = (mat @ q) / (norms * qn)
        order = sorted(range(len(sims)), key=lambda i: (-sims[i], self._triples[i].triple_id))
        return [(self._triples[i], float(sims[i])) for i in order[: min(k, len(order))]]

    # -- persistence ----------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        triples_path = directory / TRIPLES_FILE
        with triples_path.open("w", encoding="utf-8") as fh:
            for row, t in enumerate(self._triples):
                fh.write(json.dumps({
                    "row": row,
                    "triple_id": t.triple_id,
                    "query_text": t.query_text,
                    "log_id": t.log_id,
                    "mask": t.mask.to_pairs().get(t.log_id, []),
                    "program_source": t.program_source,
                    "validated": t.validated,
                    "provenance": t.provenance,
                }) + "\n")
        emb_path = directory / EMBEDDINGS_FILE
        write_smeb(self._matrix, emb_path)
        meta = {
            "version": KB_VERSION,
            "dim": self.dim,
            "count": len(self._triples),
            "checksums": {
                TRIPLES_FILE: _sha256(triples_path),
                EMBEDDINGS_FILE: _sha256(emb_path),
            },
        }
        (directory / META_FILE).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory, catalog: Optional[Catalog] = None) -> "KnowledgeBase":
        directory = Path(directory)
        meta_path = directory / META_FILE
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read KB metadata {meta_path}: {exc}") from exc
        if meta.get("version") != KB_VERSION:
            raise StoreError(f"KB version {meta.get('version')} unsupported")
        for name, expected in meta["checksums"].items():
            actual = _sha256(directory / name)
            if actual != expected:
                raise StoreError(f"checksum mismatch for {name}")
        matrix = read_smeb(directory / EMBEDDINGS_FILE)
        if matrix.shape[1] != meta["dim"]:
            raise StoreError("embedding dim does not match metadata")
        kb = cls(dim=meta["dim"], catalog=catalog)
        triples = []
        with (directory / TRIPLES_FILE).open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                triples.append(KnowledgeTriple(
                    triple_id=rec["triple_id"],
                    query_text=rec["query_text"],
                    query_embedding=matrix[rec["row"]],
                    log_id=rec["log_id"],
                    mask=ScenarioMask.from_pairs({rec["log_id"]: rec["mask"]})
                    if rec["mask"] else ScenarioMask.empty(),
                    program_source=rec["program_source"],
                    validated=rec["validated"],
                    provenance=rec.get("provenance", ""),
                ))
        if len(triples) != meta["count"]:
            raise StoreError(f"expected {meta['count']} triples, found {len(triples)}")
        kb._triples = tuple(triples)
        kb._matrix = matrix.copy()
        return kb


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()
