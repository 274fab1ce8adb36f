"""Dual-encoder text-trajectory matcher: patch encoding, cross-attention
alignment, MIL + symmetric InfoNCE objectives, training, and re-ranking."""

from .losses import LossBundle, batch_losses, global_infonce, loss_bundle, mil_loss, total_loss
from .model import (
    Matcher,
    PatchConfig,
    build_matcher,
    cross_sim,
    evidence_score,
    patch_count,
)
from .ranking import rank_candidates
from .training import (
    TrainConfig,
    TrainResult,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "LossBundle",
    "Matcher",
    "PatchConfig",
    "TrainConfig",
    "TrainResult",
    "batch_losses",
    "build_matcher",
    "cross_sim",
    "evidence_score",
    "global_infonce",
    "load_checkpoint",
    "loss_bundle",
    "mil_loss",
    "patch_count",
    "rank_candidates",
    "save_checkpoint",
    "total_loss",
    "train",
]
