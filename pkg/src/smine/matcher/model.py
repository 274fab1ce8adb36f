"""Model architecture: trajectory patch encoder, text token pathway, and
the cross-modal alignment head.

The track side slices the normalized (L, 10) state sequence into length-P
patches with stride S, maps each flattened patch through a learnable linear
layer (the 1D-convolution view of patch embedding), adds patch-level
positional encodings, and runs a small pre-norm transformer.  The text side
receives provider token embeddings, applies a two-layer MLP with a skip
connection followed by a 1D convolution, and both sides project a mean-pooled
summary into a shared L2-normalized embedding space.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np
import torch
from torch import nn

from ..errors import InvalidInputError, TrackTooShortError
from ..tracks import NormStats, STATE_DIM, Track

DTYPE = torch.float64  # training and checks run in 64-bit; checkpoints store f32


@dataclass(frozen=True)
class PatchConfig:
    """Architecture hyperparameters (defaults follow the reference setup)."""

    patch_len: int = 16          # P
    patch_stride: int = 8        # S
    token_dim: int = 256         # d0
    layers: int = 3
    heads: int = 8
    d_model: int = 256
    d_k: int = 64
    shared_dim: int = 512        # e
    text_in_dim: int = 512       # provider token width
    max_patches: int = 128
    ff_mult: int = 4
    evidence: str = "max"        # "max" | "lse"
    lse_temperature: float = 1.0

    def __post_init__(self):
        if not 1 <= self.patch_stride <= self.patch_len:
            raise InvalidInputError("require 1 <= stride <= patch_len")
        for name in ("token_dim", "layers", "heads", "d_model", "d_k",
                     "shared_dim", "text_in_dim", "max_patches", "ff_mult"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.d_model % self.heads != 0:
            raise InvalidInputError("d_model must be divisible by heads")
        if self.evidence not in ("max", "lse"):
            raise InvalidInputError("evidence must be 'max' or 'lse'")

    def to_dict(self) -> dict:
        return asdict(self)


def patch_count(length: int, patch_len: int, stride: int) -> int:
    """Number of complete patches: floor((L - P) / S) + 1."""
    if length < patch_len:
        raise TrackTooShortError(f"track length {length} < patch length {patch_len}")
    return (length - patch_len) // stride + 1


def _l2norm(vec: torch.Tensor) -> torch.Tensor:
    """Unit-normalize; a near-zero pre-norm vector falls back to the first
    canonical basis vector (documented deterministic guard)."""
    norm = torch.linalg.vector_norm(vec)
    if float(norm.detach()) < 1e-12:
        out = torch.zeros_like(vec)
        out[0] = 1.0
        return out
    return vec / norm


class EncoderBlock(nn.Module):
    """Pre-norm transformer block (multi-head self-attention + GELU MLP)."""

    def __init__(self, d_model: int, heads: int, ff_mult: int):
        super().__init__()
        self.heads = heads
        self.ln1 = nn.LayerNorm(d_model, dtype=DTYPE)
        self.qkv = nn.Linear(d_model, 3 * d_model, dtype=DTYPE)
        self.proj = nn.Linear(d_model, d_model, dtype=DTYPE)
        self.ln2 = nn.LayerNorm(d_model, dtype=DTYPE)
        self.ff1 = nn.Linear(d_model, ff_mult * d_model, dtype=DTYPE)
        self.ff2 = nn.Linear(ff_mult * d_model, d_model, dtype=DTYPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        seq_len, d_model = x.shape
        head_dim = d_model // self.heads
        h = self.ln1(x)
        q, k, v = self.qkv(h).chunk(3, dim=-1)
        q = q.view(seq_len, self.heads, head_dim).transpose(0, 1)
        k = k.view(seq_len, self.heads, head_dim).transpose(0, 1)
        v = v.view(seq_len, self.heads, head_dim).transpose(0, 1)
        scores = q @ k.transpose(-1, -2) / math.sqrt(head_dim)
        attn = torch.softmax(scores, dim=-1) @ v
        attn = attn.transpose(0, 1).reshape(seq_len, d_model)
        x = x + self.proj(attn)
        x = x + self.ff2(nn.functional.gelu(self.ff1(self.ln2(x))))
        return x


class TrackEncoder(nn.Module):
    def __init__(self, cfg: PatchConfig):
        super().__init__()
        self.cfg = cfg
        self.patch_proj = nn.Linear(cfg.patch_len * STATE_DIM, cfg.token_dim, dtype=DTYPE)
        self.pos = nn.Parameter(
            torch.zeros(cfg.max_patches, cfg.token_dim, dtype=DTYPE).normal_(0, 0.02)
        )
        self.bridge = (
            nn.Linear(cfg.token_dim, cfg.d_model, dtype=DTYPE)
            if cfg.token_dim != cfg.d_model
            else None
        )
        self.blocks = nn.ModuleList(
            EncoderBlock(cfg.d_model, cfg.heads, cfg.ff_mult) for _ in range(cfg.layers)
        )
        self.final_ln = nn.LayerNorm(cfg.d_model, dtype=DTYPE)
        self.pool_proj = nn.Linear(cfg.d_model, cfg.shared_dim, dtype=DTYPE)

    def patchify(self, states: torch.Tensor) -> torch.Tensor:
        """(L, 10) -> (T, d0) tokens; linear map of each flattened patch plus
        the patch-index positional encoding."""
        length = states.shape[0]
        count = patch_count(length, self.cfg.patch_len, self.cfg.patch_stride)
        if count > self.cfg.max_patches:
            raise InvalidInputError(
                f"{count} patches exceed max_patches={self.cfg.max_patches}"
            )
        slices = [
            states[t * self.cfg.patch_stride : t * self.cfg.patch_stride + self.cfg.patch_len]
            .reshape(-1)
            for t in range(count)
        ]
        tokens = self.patch_proj(torch.stack(slices))
        return tokens + self.pos[:count]

    def forward(self, states: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self.patchify(states)
        if self.bridge is not None:
            x = self.bridge(x)
        for block in self.blocks:
            x = block(x)
        x = self.final_ln(x)
        pooled = _l2norm(self.pool_proj(x.mean(dim=0)))
        return x, pooled


class TextEncoder(nn.Module):
    def __init__(self, cfg: PatchConfig):
        super().__init__()
        self.cfg = cfg
        self.mlp1 = nn.Linear(cfg.text_in_dim, cfg.text_in_dim, dtype=DTYPE)
        self.mlp2 = nn.Linear(cfg.text_in_dim, cfg.text_in_dim, dtype=DTYPE)
        self.conv = nn.Conv1d(cfg.text_in_dim, cfg.d_model, kernel_size=3,
                              padding=1, dtype=DTYPE)
        self.pool_proj = nn.Linear(cfg.d_model, cfg.shared_dim, dtype=DTYPE)

    def forward(self, tokens: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if tokens.ndim != 2 or tokens.shape[1] != self.cfg.text_in_dim:
            raise InvalidInputError(
                f"text tokens must be (M, {self.cfg.text_in_dim}), got {tuple(tokens.shape)}"
            )
        h = tokens + self.mlp2(nn.functional.gelu(self.mlp1(tokens)))
        y = self.conv(h.T.unsqueeze(0)).squeeze(0).T
        pooled = _l2norm(self.pool_proj(y.mean(dim=0)))
        return y, pooled


def cross_sim(track_seq: torch.Tensor, text_seq: torch.Tensor,
              w_q: nn.Linear, w_k: nn.Linear, d_k: int) -> torch.Tensor:
    """Alignment matrix (B W_q)(A W_k)^T / sqrt(d_k); no softmax applied."""
    return (w_q(track_seq) @ w_k(text_seq).T) / math.sqrt(d_k)


def evidence_score(alignment: torch.Tensor, mode: str = "max",
                   lse_temperature: float = 1.0) -> torch.Tensor:
    """Condense the alignment matrix to one scalar at the most relevant
    moments: max pooling by default, or a temperature log-sum-exp softened
    max (always <= max, converging to it as the temperature drops)."""
    if alignment.numel() == 0:
        raise InvalidInputError("alignment matrix is empty")
    if mode == "max":
        return alignment.max()
    if mode == "lse":
        t = lse_temperature
        return t * (torch.logsumexp(alignment / t, dim=(0, 1))
                    - math.log(alignment.numel()))
    raise InvalidInputError(f"unknown evidence mode {mode!r}")


class Matcher(nn.Module):
    """Full dual-encoder model with z-score input normalization baked in."""

    def __init__(self, cfg: PatchConfig, norm: Optional[NormStats] = None):
        super().__init__()
        self.cfg = cfg
        mean = norm.mean if norm else np.zeros(STATE_DIM)
        std = norm.std if norm else np.ones(STATE_DIM)
        self.register_buffer("norm_mean", torch.tensor(mean, dtype=DTYPE))
        self.register_buffer("norm_std", torch.tensor(std, dtype=DTYPE))
        self.track_enc = TrackEncoder(cfg)
        self.text_enc = TextEncoder(cfg)
        self.w_q = nn.Linear(cfg.d_model, cfg.d_k, bias=False, dtype=DTYPE)
        self.w_k = nn.Linear(cfg.d_model, cfg.d_k, bias=False, dtype=DTYPE)

    @property
    def norm_stats(self) -> NormStats:
        return NormStats(mean=self.norm_mean.numpy().copy(),
                         std=self.norm_std.numpy().copy())

    def prepare_states(self, track: Union[Track, np.ndarray, torch.Tensor]) -> torch.Tensor:
        """Raw track (or (L, 10) matrix) -> normalized float64 tensor."""
        if isinstance(track, Track):
            mat = torch.tensor(track.state_matrix, dtype=DTYPE)
        elif isinstance(track, torch.Tensor):
            mat = track.to(DTYPE)
        else:
            mat = torch.tensor(np.asarray(track), dtype=DTYPE)
        if mat.ndim != 2 or mat.shape[1] != STATE_DIM:
            raise InvalidInputError(f"track states must be (L, {STATE_DIM})")
        return (mat - self.norm_mean) / self.norm_std

    def encode_track(self, track) -> tuple[torch.Tensor, torch.Tensor]:
        return self.track_enc(self.prepare_states(track))

    def encode_text(self, tokens) -> tuple[torch.Tensor, torch.Tensor]:
        if not isinstance(tokens, torch.Tensor):
            tokens = torch.tensor(np.asarray(tokens), dtype=DTYPE)
        else:
            tokens = tokens.to(DTYPE)
        if tokens.ndim == 1:
            tokens = tokens.unsqueeze(0)
        return self.text_enc(tokens)

    def alignment(self, track_seq: torch.Tensor, text_seq: torch.Tensor) -> torch.Tensor:
        return cross_sim(track_seq, text_seq, self.w_q, self.w_k, self.cfg.d_k)

    def evidence(self, track_seq: torch.Tensor, text_seq: torch.Tensor) -> torch.Tensor:
        return evidence_score(self.alignment(track_seq, text_seq),
                              self.cfg.evidence, self.cfg.lse_temperature)

    def pair_scores(self, track, text_tokens) -> tuple[torch.Tensor, torch.Tensor]:
        """(global cosine, evidence) for one track-text pair (inference only)."""
        with torch.no_grad():
            track_seq, b_hat = self.encode_track(track)
            text_seq, a_hat = self.encode_text(text_tokens)
            return b_hat @ a_hat, self.evidence(track_seq, text_seq)


def build_matcher(cfg: PatchConfig, norm: Optional[NormStats] = None,
                  seed: int = 0) -> Matcher:
    """Seeded deterministic construction (parameter init order is fixed)."""
    torch.manual_seed(seed)
    return Matcher(cfg, norm)
