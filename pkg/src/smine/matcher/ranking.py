"""Candidate re-ranking: blend of pooled cosine similarity and evidence."""

from __future__ import annotations

import math
from typing import Sequence

import torch

from ..errors import InvalidInputError
from ..tracks import Track
from .model import Matcher


def rank_candidates(
    query_text_tokens,
    candidates: Sequence[Track],
    model: Matcher,
    alpha: float = 0.5,
) -> list[tuple[str, float]]:
    """Score candidates by alpha * pooled-cosine + (1 - alpha) * evidence,
    descending, ties by track_id.  Tracks shorter than the patch length
    score -inf and rank last."""
    if not candidates:
        raise InvalidInputError("candidates must be non-empty")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError("alpha must lie in [0, 1]")
    with torch.no_grad():
        text_seq, a_hat = model.encode_text(query_text_tokens)
        scored = []
        for track in candidates:
            if len(track) < model.cfg.patch_len:
                scored.append((track.track_id, -math.inf))
                continue
            track_seq, b_hat = model.encode_track(track)
            cosine = float(b_hat @ a_hat)
            evidence = float(model.evidence(track_seq, text_seq))
            scored.append((track.track_id, alpha * cosine + (1.0 - alpha) * evidence))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored
