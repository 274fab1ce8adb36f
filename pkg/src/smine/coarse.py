"""Stage (a): embedding-similarity coarse filter.

Partitions each log into overlapping temporal windows, pools precomputed
frame embeddings into window vectors, ranks windows by cosine similarity
against the query embedding (summed over camera views), keeps the top-k,
merges adjacent windows into a search region, and restricts the candidate
track set to that region.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .embeddings import EmbeddingStore
from .errors import InvalidInputError, UndefinedSimilarityError
from .tracks import NS_PER_S, LogManifest

_TIME_EPS = 1e-9


@dataclass(frozen=True)
class WindowScore:
    """Accumulated cross-view similarity of one temporal window."""

    log_id: str
    start: float
    end: float
    score: float

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise InvalidInputError(f"bad window [{self.start}, {self.end}]")


@dataclass(frozen=True)
class TimeRegion:
    """Disjoint, sorted [start, end] second intervals per log."""

    intervals: Mapping[str, tuple[tuple[float, float], ...]] = field(default_factory=dict)

    def __post_init__(self):
        cleaned = {}
        for log_id, spans in self.intervals.items():
            spans = tuple((float(a), float(b)) for a, b in spans)
            for (a, b) in spans:
                if b < a:
                    raise InvalidInputError(f"interval [{a}, {b}] reversed")
            for (_, b), (a2, _) in zip(spans, spans[1:]):
                if a2 <= b:
                    raise InvalidInputError("intervals must be sorted and disjoint")
            if spans:
                cleaned[log_id] = spans
        object.__setattr__(self, "intervals", cleaned)

    def is_empty(self) -> bool:
        return not self.intervals

    def for_log(self, log_id: str) -> tuple[tuple[float, float], ...]:
        return self.intervals.get(log_id, ())

    def contains_ts_ns(self, log_id: str, ts_ns: int) -> bool:
        # integer-ns bounds so frame-grid points never drift across edges
        for a, b in self.intervals.get(log_id, ()):
            if round(a * NS_PER_S) <= ts_ns <= round(b * NS_PER_S):
                return True
        return False

    def total_span(self) -> float:
        return sum(b - a for spans in self.intervals.values() for a, b in spans)


def partition_windows(duration: float, window: float, stride: float) -> list[tuple[float, float]]:
    """Sliding windows [i*stride, i*stride + window]; a final window clipped
    to [duration - window, duration] is appended when the tail is uncovered."""
    if window <= 0 or stride <= 0:
        raise InvalidInputError("window and stride must be positive")
    if window > duration:
        raise InvalidInputError(f"window {window} exceeds duration {duration}")
    count = int((duration - window) / stride + _TIME_EPS) + 1
    windows = [(i * stride, i * stride + window) for i in range(count)]
    if windows[-1][1] < duration - _TIME_EPS:
        windows.append((duration - window, duration))
    return windows


def pool_window(frames) -> np.ndarray:
    """Arithmetic mean of the sampled frame embeddings."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[None, :]
    if frames.shape[0] == 0:
        raise InvalidInputError("cannot pool an empty frame list")
    return frames.mean(axis=0)


def score_window(f_text, f_win) -> float:
    """Cosine similarity between the query and window embeddings."""
    f_text = np.asarray(f_text, dtype=np.float64)
    f_win = np.asarray(f_win, dtype=np.float64)
    nt = np.linalg.norm(f_text)
    nw = np.linalg.norm(f_win)
    if nt == 0.0 or nw == 0.0:
        raise UndefinedSimilarityError("cosine similarity undefined for zero vector")
    return float(np.dot(f_text, f_win) / (nt * nw))


def sample_uniform(values: Sequence, n: int) -> list:
    """Evenly spaced sample of up to ``n`` items (deduplicated indices)."""
    m = len(values)
    if m == 0 or n <= 0:
        return []
    idx = np.unique(np.round(np.linspace(0, m - 1, num=min(n, m))).astype(int))
    return [values[i] for i in idx]


def score_log_windows(
    store: EmbeddingStore,
    log_id: str,
    duration: float,
    camera_ids: Iterable[str],
    f_text,
    window: float = 3.0,
    stride: float = 1.0,
    frames_per_window: int = 5,
) -> list[WindowScore]:
    """Score every window of one log, accumulating similarity across views.

    Views with no frames inside a window contribute 0 to its score.
    """
    windows = partition_windows(duration, window, stride)
    totals = [0.0] * len(windows)
    for camera_id in camera_ids:
        ts_all = store.frame_timestamps(log_id, camera_id)
        if ts_all.size == 0:
            continue
        for wi, (a, b) in enumerate(windows):
            lo = np.searchsorted(ts_all, round(a * NS_PER_S), side="left")
            hi = np.searchsorted(ts_all, round(b * NS_PER_S), side="right")
            inside = ts_all[lo:hi]
            if inside.size == 0:
                continue
            sampled = sample_uniform(list(inside), frames_per_window)
            pooled = pool_window([store.frame_vector(log_id, camera_id, int(t)) for t in sampled])
            totals[wi] += score_window(f_text, pooled)
    return [WindowScore(log_id, a, b, totals[i]) for i, (a, b) in enumerate(windows)]


def merge_intervals(
    spans: Iterable[tuple[float, float]], slack: float = 0.0
) -> tuple[tuple[float, float], ...]:
    """Union of intervals; gaps <= slack are bridged (slack 0 merges abutting)."""
    spans = sorted(spans)
    merged: list[list[float]] = []
    for a, b in spans:
        if merged and a - merged[-1][1] <= slack + _TIME_EPS:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return tuple((a, b) for a, b in merged)


def rank_and_merge(scores: Iterable[WindowScore], k: int, slack: float = 0.0) -> TimeRegion:
    """Top-k windows by accumulated score, merged into a search region.

    Entries for the same (log, start, end) are summed before ranking (the
    per-view accumulation).  Ties break by earlier start, then log_id.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    grouped: dict[tuple[str, float, float], float] = {}
    for ws in scores:
        key = (ws.log_id, ws.start, ws.end)
        grouped[key] = grouped.get(key, 0.0) + ws.score
    if not grouped:
        return TimeRegion({})
    ranked = sorted(grouped.items(), key=lambda kv: (-kv[1], kv[0][1], kv[0][0]))
    top = ranked[: min(k, len(ranked))]
    per_log: dict[str, list[tuple[float, float]]] = {}
    for (log_id, a, b), _score in top:
        per_log.setdefault(log_id, []).append((a, b))
    return TimeRegion({log_id: merge_intervals(spans, slack) for log_id, spans in per_log.items()})


def restrict_tracks(log: LogManifest, region: TimeRegion) -> LogManifest:
    """Keep tracks with at least one state inside the region.

    Retained tracks keep all their states (predicates may need context);
    the returned manifest carries the region for downstream masking.
    """
    spans = region.for_log(log.log_id)
    kept = [
        t
        for t in log.tracks
        if any(region.contains_ts_ns(log.log_id, int(ts)) for ts in t.ts_ns)
    ]
    return log.with_tracks(kept, region=spans)


# ---------------------------------------------------------------------------
# Query term extraction against three lexicons (colors, entities, spatial
# relations).  Multi-word phrases match longest-first; matches are lowercased,
# order-preserving, and deduplicated.  An empty result means the caller should
# embed the raw query instead.

DEFAULT_COLORS = (
    "black", "blue", "brown", "gray", "green", "grey", "orange", "pink",
    "purple", "red", "silver", "white", "yellow",
)

DEFAULT_ENTITIES = (
    "barrel", "bicycle", "bicyclist", "bollard", "bus", "car", "cone", "cyclist",
    "dog", "motorcycle", "motorcyclist", "pedestrian", "person", "scooter",
    "sign", "stroller", "trailer", "truck", "van", "vehicle", "wheelchair",
)

DEFAULT_RELATIONS = (
    "accelerating", "approaching", "behind", "beside", "between", "braking",
    "crossing", "facing", "following", "in front of", "left", "moving", "near",
    "next to", "overtaking", "passing", "right", "stationary", "stopped",
    "stopping", "toward", "turning",
)


@dataclass(frozen=True)
class Lexicons:
    colors: tuple[str, ...] = DEFAULT_COLORS
    entities: tuple[str, ...] = DEFAULT_ENTITIES
    relations: tuple[str, ...] = DEFAULT_RELATIONS

    def all_phrases(self) -> list[tuple[str, ...]]:
        phrases = set(self.colors) | set(self.entities) | set(self.relations)
        return [tuple(p.lower().split()) for p in phrases]


def load_lexicon(path) -> tuple[str, ...]:
    """One term per line; blank lines and ``#`` comments ignored."""
    terms = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        term = line.split("#", 1)[0].strip().lower()
        if term:
            terms.append(term)
    return tuple(terms)


def extract_query_terms(query: str, lexicons: Optional[Lexicons] = None) -> list[str]:
    if not query or not query.strip():
        raise InvalidInputError("query must be non-empty")
    lexicons = lexicons or Lexicons()
    phrases = lexicons.all_phrases()
    max_words = max((len(p) for p in phrases), default=1)
    phrase_set = set(phrases)
    tokens = re.findall(r"[a-z0-9]+", query.lower())
    found: list[str] = []
    i = 0
    while i < len(tokens):
        matched = False
        for span in range(min(max_words, len(tokens) - i), 0, -1):
            candidate = tuple(tokens[i : i + span])
            if candidate in phrase_set:
                term = " ".join(candidate)
                if term not in found:
                    found.append(term)
                i += span
                matched = True
                break
        if not matched:
            i += 1
    return found


def query_text_for_embedding(query: str, lexicons: Optional[Lexicons] = None) -> str:
    """Joined extracted terms, falling back to the raw query when no term hits."""
    terms = extract_query_terms(query, lexicons)
    return " ".join(terms) if terms else query.strip()
