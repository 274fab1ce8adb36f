"""Scenario masks: the (track, timestamp) sets a query denotes per log."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

Entry = tuple[str, int]  # (track_id, ts_ns)


@dataclass(frozen=True)
class ScenarioMask:
    """Set of (track_id, ts_ns) entries, grouped per log."""

    entries: Mapping[str, frozenset[Entry]] = field(default_factory=dict)

    def __post_init__(self):
        cleaned = {
            log_id: frozenset((str(t), int(ts)) for t, ts in pairs)
            for log_id, pairs in self.entries.items()
            if pairs
        }
        object.__setattr__(self, "entries", cleaned)

    def __hash__(self):
        return hash(frozenset(self.entries.items()))

    @classmethod
    def single(cls, log_id: str, pairs: Iterable[Entry]) -> "ScenarioMask":
        return cls({log_id: frozenset(pairs)})

    @classmethod
    def empty(cls) -> "ScenarioMask":
        return cls({})

    def for_log(self, log_id: str) -> frozenset[Entry]:
        return self.entries.get(log_id, frozenset())

    def log_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.entries))

    def size(self) -> int:
        return sum(len(p) for p in self.entries.values())

    def is_empty(self) -> bool:
        return self.size() == 0

    def track_ids(self, log_id: str) -> tuple[str, ...]:
        return tuple(sorted({t for t, _ in self.for_log(log_id)}))

    def timestamps(self, log_id: str) -> frozenset[int]:
        return frozenset(ts for _, ts in self.for_log(log_id))

    def union(self, other: "ScenarioMask") -> "ScenarioMask":
        out = {}
        for log_id in set(self.entries) | set(other.entries):
            out[log_id] = self.for_log(log_id) | other.for_log(log_id)
        return ScenarioMask(out)

    def intersection(self, other: "ScenarioMask") -> "ScenarioMask":
        out = {}
        for log_id in set(self.entries) & set(other.entries):
            out[log_id] = self.for_log(log_id) & other.for_log(log_id)
        return ScenarioMask(out)

    def symmetric_difference_size(self, other: "ScenarioMask") -> int:
        total = 0
        for log_id in set(self.entries) | set(other.entries):
            total += len(self.for_log(log_id) ^ other.for_log(log_id))
        return total

    def to_pairs(self) -> dict[str, list[list]]:
        """JSON-friendly form: log_id -> sorted [[track_id, ts_ns], ...]."""
        return {
            log_id: [[t, ts] for t, ts in sorted(pairs)]
            for log_id, pairs in sorted(self.entries.items())
        }

    @classmethod
    def from_pairs(cls, data: Mapping[str, Iterable]) -> "ScenarioMask":
        return cls({log_id: frozenset((t, int(ts)) for t, ts in pairs)
                    for log_id, pairs in data.items()})
