"""End-to-end mining pipeline: coarse filter -> KB exemplar retrieval ->
program synthesis with repair -> DSL evaluation -> matcher re-ranking.

Every stage appends an audit record; ``audit_fingerprint`` hashes the
records with timing fields stripped, so seeded runs with a mock client are
reproducible byte-for-byte modulo wall-clock noise.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Optional

from .coarse import (
    Lexicons,
    TimeRegion,
    query_text_for_embedding,
    rank_and_merge,
    restrict_tracks,
    score_log_windows,
)
from .dsl import Catalog, DEFAULT_CATALOG, mask_from_region
from .dsl.evaluator import evaluate_with_context
from .embeddings import EmbeddingStore
from .errors import DataError
from .kb import KnowledgeBase
from .mask import ScenarioMask
from .matcher import Matcher, rank_candidates
from .synth import Exemplar, SynthesisOutcome, TextGenClient, assemble_prompt, repair_loop
from .tracks import LogManifest

EXPORTER_HINT = (
    "no frame embeddings found for this log; run the embedding exporter "
    "(smine-export) to produce the SMEB store and sidecar index"
)


@dataclass
class MineResult:
    log_id: str
    query: str
    status: str  # "success" | "flagged_for_review"
    mask: ScenarioMask
    region: TimeRegion
    ranking: list[tuple[str, float]] = field(default_factory=list)
    outcome: Optional[SynthesisOutcome] = None
    exemplars: list[Exemplar] = field(default_factory=list)
    work_evaluated: int = 0
    audit: list[dict] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "log_id": self.log_id,
            "query": self.query,
            "status": self.status,
            "mask": self.mask.to_pairs(),
            "region": {k: list(map(list, v)) for k, v in self.region.intervals.items()},
            "ranking": [[t, s] for t, s in self.ranking],
            "work_evaluated": self.work_evaluated,
            "calls_made": self.outcome.calls_made if self.outcome else 0,
        }


def audit_fingerprint(records: list[dict]) -> str:
    """Hash of the audit trail with timing fields removed."""
    stripped = [
        {k: v for k, v in rec.items() if k != "elapsed_s"} for rec in records
    ]
    payload = json.dumps(stripped, sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


class _Stages:
    def __init__(self):
        self.records: list[dict] = []

    def add(self, stage: str, started: float, **detail):
        rec = {"stage": stage, **detail, "elapsed_s": time.perf_counter() - started}
        self.records.append(rec)
        return rec


def coarse_stage(
    query: str,
    log: LogManifest,
    store: EmbeddingStore,
    query_id: str,
    window_s: float = 3.0,
    stride_s: float = 1.0,
    frames_per_window: int = 5,
    top_k: int = 5,
    merge_slack_s: float = 0.0,
    lexicons: Optional[Lexicons] = None,
    embed_mode: str = "terms",
    stages: Optional[_Stages] = None,
) -> tuple[LogManifest, TimeRegion]:
    """Stage (a) on one log: returns the restricted log and its region."""
    started = time.perf_counter()
    if not store.has_log(log.log_id):
        raise DataError(f"log {log.log_id!r}: {EXPORTER_HINT}")
    if query_id not in store.text_index:
        raise DataError(
            f"query embedding {query_id!r} missing from the store; {EXPORTER_HINT}"
        )
    embed_text = (
        query_text_for_embedding(query, lexicons) if embed_mode == "terms" else query.strip()
    )
    f_text = store.text_vector(query_id)
    scores = score_log_windows(
        store, log.log_id, log.duration, log.camera_ids, f_text,
        window=window_s, stride=stride_s, frames_per_window=frames_per_window,
    )
    region = rank_and_merge(scores, k=top_k, slack=merge_slack_s)
    restricted = restrict_tracks(log, region)
    if stages is not None:
        stages.add(
            "coarse", started,
            query_terms=embed_text,
            windows_scored=len(scores),
            region={k: list(map(list, v)) for k, v in region.intervals.items()},
            tracks_kept=len(restricted.tracks),
            tracks_total=len(log.tracks),
        )
    return restricted, region


def mine_query(
    query: str,
    log: LogManifest,
    store: EmbeddingStore,
    client: TextGenClient,
    query_id: str,
    kb: Optional[KnowledgeBase] = None,
    query_sentence_embedding=None,
    model: Optional[Matcher] = None,
    catalog: Optional[Catalog] = None,
    lexicons: Optional[Lexicons] = None,
    window_s: float = 3.0,
    stride_s: float = 1.0,
    frames_per_window: int = 5,
    top_k: int = 5,
    merge_slack_s: float = 0.0,
    embed_mode: str = "terms",
    budget: int = 5,
    exemplar_top_k: int = 10,
    temperature: float = 0.2,
    max_tokens: int = 2048,
    alpha_blend: float = 0.5,
) -> MineResult:
    """Run the full pipeline for one query on one log."""
    catalog = catalog or DEFAULT_CATALOG
    stages = _Stages()

    restricted, region = coarse_stage(
        query, log, store, query_id,
        window_s=window_s, stride_s=stride_s, frames_per_window=frames_per_window,
        top_k=top_k, merge_slack_s=merge_slack_s, lexicons=lexicons,
        embed_mode=embed_mode, stages=stages,
    )

    started = time.perf_counter()
    exemplars: list[Exemplar] = []
    if kb is not None and len(kb) > 0 and query_sentence_embedding is not None:
        hits = kb.knn_retrieve(query_sentence_embedding, k=exemplar_top_k)
        exemplars = [
            Exemplar(query=t.query_text, program=t.program_source, similarity=sim)
            for t, sim in hits
        ]
    stages.add("kb_retrieve", started, exemplars=len(exemplars))

    started = time.perf_counter()
    bundle = assemble_prompt(
        query, exemplars, catalog.render_doc(), catalog.categories,
        top_k=exemplar_top_k,
    )
    audit_records: list[dict] = []
    outcome = repair_loop(
        client, bundle, restricted, budget=budget, temperature=temperature,
        max_tokens=max_tokens, catalog=catalog, audit_sink=audit_records.append,
    )
    stages.records.extend(audit_records)
    stages.add("synth", started, status=outcome.status, calls_made=outcome.calls_made)

    mask = ScenarioMask.empty()
    work = 0
    ranking: list[tuple[str, float]] = []
    if outcome.succeeded:
        started = time.perf_counter()
        raw_mask, ctx = evaluate_with_context(outcome.program, restricted, catalog=catalog)
        work = ctx.work
        spans = restricted.active_region or ()
        mask = (
            raw_mask.intersection(mask_from_region(restricted, spans))
            if spans else raw_mask
        )
        stages.add("evaluate", started, mask_size=mask.size(), work=work)

        started = time.perf_counter()
        candidate_ids = mask.track_ids(log.log_id)
        if model is not None and candidate_ids:
            candidates = [restricted.tracks_by_id[t] for t in candidate_ids]
            ranking = rank_candidates(
                store.text_tokens(query_id), candidates, model, alpha=alpha_blend
            )
            stages.add("rank", started, candidates=len(candidates))
        else:
            ranking = [(t, 0.0) for t in candidate_ids]
            stages.add("rank", started, candidates=len(candidate_ids), skipped=model is None)

    return MineResult(
        log_id=log.log_id,
        query=query,
        status=outcome.status,
        mask=mask,
        region=region,
        ranking=ranking,
        outcome=outcome,
        exemplars=exemplars,
        work_evaluated=work,
        audit=stages.records,
    )


def unfiltered_work(program, log: LogManifest, catalog: Optional[Catalog] = None) -> int:
    """(track, timestamp) evaluations a no-filter run of the program costs."""
    _, ctx = evaluate_with_context(program, log, catalog=catalog)
    return ctx.work
