"""Seeded training loop and the ``SMCK`` checkpoint format.

Optimization is AdamW (decoupled weight decay) under a cosine-annealing
schedule with a linear warmup, stepped per epoch.  Batch composition comes
from a seeded generator, so a fixed seed and fixed data give bitwise
reproducible checkpoints.
"""

from __future__ import annotations

import io
import json
import struct
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from ..errors import DataError, InvalidInputError, StoreError
from ..tracks import NormStats, STATE_DIM, Track
from .losses import batch_losses
from .model import DTYPE, Matcher, PatchConfig, build_matcher

SMCK_MAGIC = b"SMCK"
SMCK_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters (defaults follow the reference setup)."""

    epochs: int = 50
    batch_size: int = 128
    lr: float = 1e-4
    weight_decay: float = 0.01
    warmup_epochs: int = 5
    lambda_mil: float = 1.0
    lambda_global: float = 1.0
    gamma: float = 0.1
    tau: float = 0.07
    seed: int = 0
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be >= 1")
        if self.gamma <= 0 or self.tau <= 0:
            raise InvalidInputError("gamma and tau must be positive")
        if self.lambda_mil < 0 or self.lambda_global < 0:
            raise InvalidInputError("loss weights must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: Matcher
    history: list[dict] = field(default_factory=list)
    skipped_short: int = 0

    @property
    def final_total(self) -> float:
        return self.history[-1]["total"] if self.history else float("nan")

    @property
    def initial_total(self) -> float:
        return self.history[0]["total"] if self.history else float("nan")


def _lr_factor(epoch: int, cfg: TrainConfig) -> float:
    """Linear warmup to 1.0, then cosine annealing toward 0."""
    if cfg.warmup_epochs > 0 and epoch < cfg.warmup_epochs:
        return (epoch + 1) / cfg.warmup_epochs
    span = max(cfg.epochs - cfg.warmup_epochs, 1)
    progress = min(epoch - cfg.warmup_epochs, span) / span
    return 0.5 * (1.0 + np.cos(np.pi * progress))


def _states_of(item) -> np.ndarray:
    if isinstance(item, Track):
        return item.state_matrix
    arr = np.asarray(item, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != STATE_DIM:
        raise InvalidInputError(f"track states must be (L, {STATE_DIM})")
    return arr


def fit_norm_from_pairs(pairs) -> NormStats:
    """Z-score statistics over the training tracks only."""
    data = np.concatenate([_states_of(track) for track, _ in pairs], axis=0)
    mean = data.mean(axis=0)
    std = np.maximum(data.std(axis=0), 1e-8)
    return NormStats(mean=mean, std=std)


def train(
    pairs: Sequence[tuple],
    patch_cfg: PatchConfig,
    train_cfg: TrainConfig,
    norm: Optional[NormStats] = None,
    model: Optional[Matcher] = None,
) -> TrainResult:
    """Train a matcher on (track, text tokens) pairs from the knowledge base.

    Tracks shorter than the patch length are skipped (documented behavior);
    they still rank, last, at inference.  With both loss weights zero the
    optimizer never steps, leaving parameters untouched.
    """
    if len(pairs) < 2:
        raise InvalidInputError("need at least two training pairs")
    usable = []
    skipped = 0
    for track, text in pairs:
        states = _states_of(track)
        if states.shape[0] < patch_cfg.patch_len:
            skipped += 1
            continue
        usable.append((states, np.asarray(text, dtype=np.float64)))
    if len(usable) < 2:
        raise InvalidInputError("fewer than two pairs long enough to patchify")
    if norm is None:
        norm = NormStats(
            mean=np.concatenate([s for s, _ in usable]).mean(axis=0),
            std=np.maximum(np.concatenate([s for s, _ in usable]).std(axis=0), 1e-8),
        )
    if model is None:
        model = build_matcher(patch_cfg, norm, seed=train_cfg.seed)
    if train_cfg.batch_size < 2 and train_cfg.lambda_global > 0:
        warnings.warn("batch size < 2 makes the InfoNCE term degenerate")

    frozen = train_cfg.lambda_mil == 0 and train_cfg.lambda_global == 0
    optimizer = torch.optim.AdamW(model.parameters(), lr=train_cfg.lr,
                                  weight_decay=train_cfg.weight_decay)
    rng = np.random.default_rng(train_cfg.seed)
    history: list[dict] = []
    step = 0
    done = False
    for epoch in range(train_cfg.epochs):
        factor = _lr_factor(epoch, train_cfg)
        for group in optimizer.param_groups:
            group["lr"] = train_cfg.lr * factor
        order = rng.permutation(len(usable))
        for lo in range(0, len(order), train_cfg.batch_size):
            batch = [usable[i] for i in order[lo : lo + train_cfg.batch_size]]
            tracks = [b[0] for b in batch]
            texts = [b[1] for b in batch]
            mil, glob, total = batch_losses(
                model, tracks, texts,
                gamma=train_cfg.gamma, tau=train_cfg.tau,
                lambda_mil=train_cfg.lambda_mil,
                lambda_global=train_cfg.lambda_global,
            )
            if not frozen:
                optimizer.zero_grad(set_to_none=True)
                total.backward()
                optimizer.step()
            step += 1
            history.append({
                "step": step,
                "epoch": epoch,
                "mil": float(mil.detach()),
                "global": float(glob.detach()),
                "total": float(total.detach()),
                "lr": train_cfg.lr * factor,
            })
            if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                done = True
                break
        if done:
            break
    return TrainResult(model=model, history=history, skipped_short=skipped)


# --- SMCK checkpoint format ---------------------------------------------------
#
#   SMCK | version u32 | config_len u32 | config JSON (utf-8)
#   n_tensors u32
#   per tensor: name_len u16, name utf-8, ndim u8, dims u32..., data f32 LE


def save_checkpoint(model: Matcher, path, train_cfg: Optional[TrainConfig] = None,
                    extra: Optional[dict] = None) -> None:
    config = {
        "patch": model.cfg.to_dict(),
        "norm": {
            "mean": model.norm_mean.numpy().tolist(),
            "std": model.norm_std.numpy().tolist(),
        },
        "train": train_cfg.to_dict() if train_cfg else None,
        "extra": extra or {},
    }
    payload = json.dumps(config, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(SMCK_MAGIC)
    buf.write(struct.pack("<I", SMCK_VERSION))
    buf.write(struct.pack("<I", len(payload)))
    buf.write(payload)
    state = model.state_dict()
    tensors = [(name, tensor) for name, tensor in state.items()]
    buf.write(struct.pack("<I", len(tensors)))
    for name, tensor in tensors:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        arr = tensor.detach().numpy().astype("<f4")
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[Matcher, dict]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    view = memoryview(raw)
    if len(raw) < 12 or bytes(view[:4]) != SMCK_MAGIC:
        raise StoreError(f"{path}: not an SMCK checkpoint")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != SMCK_VERSION:
        raise StoreError(f"{path}: unsupported checkpoint version {version}")
    (config_len,) = struct.unpack_from("<I", raw, 8)
    offset = 12
    try:
        config = json.loads(bytes(view[offset : offset + config_len]).decode("utf-8"))
        offset += config_len
        (n_tensors,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        state: dict[str, torch.Tensor] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            name = bytes(view[offset : offset + name_len]).decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", raw, offset)
            offset += 1
            dims = struct.unpack_from(f"<{ndim}I", raw, offset)
            offset += 4 * ndim
            count = int(np.prod(dims)) if dims else 1
            arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
            state[name] = torch.tensor(arr.reshape(dims), dtype=DTYPE)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise StoreError(f"{path}: truncated or corrupt checkpoint: {exc}") from exc
    cfg = PatchConfig(**config["patch"])
    norm = NormStats(mean=np.array(config["norm"]["mean"]),
                     std=np.array(config["norm"]["std"]))
    model = Matcher(cfg, norm)
    model.load_state_dict(state)
    return model, config
