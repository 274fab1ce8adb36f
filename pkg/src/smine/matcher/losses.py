"""Training objectives: MIL over evidence scores and symmetric InfoNCE over
pooled embeddings, combined as a weighted sum.

Both softmax-style losses run through log-sum-exp (max-shifted) so large
logits never overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import InvalidInputError
from .model import Matcher


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(torch.float64)
    return torch.tensor(np.asarray(x, dtype=np.float64))


def mil_loss(z_pos, z_neg, gamma: float) -> torch.Tensor:
    """Mean over i of -log( e^{z_i/g} / (e^{z_i/g} + sum_j e^{z_ij^-/g}) ).

    ``z_pos`` is (N,) positive evidence; ``z_neg`` is (N, K) negatives per
    positive (K may be 0, giving an exact 0 loss).
    """
    if gamma <= 0:
        raise InvalidInputError("gamma must be positive")
    z_pos = _as_tensor(z_pos).reshape(-1)
    n = z_pos.shape[0]
    if n == 0:
        raise InvalidInputError("need at least one positive")
    z_neg = _as_tensor(z_neg).reshape(n, -1)
    if not torch.isfinite(z_pos).all() or not torch.isfinite(z_neg).all():
        raise InvalidInputError("non-finite evidence score")
    if z_neg.shape[1] == 0:
        return torch.zeros((), dtype=torch.float64)
    logits = torch.cat([z_pos.unsqueeze(1), z_neg], dim=1) / gamma
    return (torch.logsumexp(logits, dim=1) - z_pos / gamma).mean()


def global_infonce(b_hat, a_hat, tau: float) -> torch.Tensor:
    """Symmetric InfoNCE on s_ij = (b_i . a_j) / tau, both retrieval
    directions averaged; all other batch items are in-batch negatives."""
    if tau <= 0:
        raise InvalidInputError("tau must be positive")
    b_hat = _as_tensor(b_hat)
    a_hat = _as_tensor(a_hat)
    if b_hat.ndim != 2 or a_hat.shape != b_hat.shape:
        raise InvalidInputError("embeddings must be matching (N, e) matrices")
    for name, mat in (("b", b_hat), ("a", a_hat)):
        norms = torch.linalg.vector_norm(mat, dim=1)
        if not torch.all(torch.abs(norms - 1.0) <= 1e-6):
            raise InvalidInputError(f"{name} rows must be L2-normalized to 1e-6")
    s = (b_hat @ a_hat.T) / tau
    diag = torch.diagonal(s)
    row = (torch.logsumexp(s, dim=1) - diag).mean()
    col = (torch.logsumexp(s, dim=0) - diag).mean()
    return 0.5 * (row + col)


def total_loss(mil, global_, lambda_mil: float = 1.0,
               lambda_global: float = 1.0) -> torch.Tensor:
    if lambda_mil < 0 or lambda_global < 0:
        raise InvalidInputError("loss weights must be non-negative")
    return lambda_mil * _as_tensor(mil) + lambda_global * _as_tensor(global_)


@dataclass(frozen=True)
class LossBundle:
    """Loss values plus gradients w.r.t. every trainable parameter."""

    mil: float
    global_: float
    total: float
    gradients: dict[str, np.ndarray]

    def __post_init__(self):
        for name, value in (("mil", self.mil), ("global", self.global_),
                            ("total", self.total)):
            if not np.isfinite(value) or value < 0:
                raise InvalidInputError(f"{name} loss must be finite and >= 0")


def batch_losses(
    model: Matcher,
    tracks,
    texts,
    gamma: float = 0.1,
    tau: float = 0.07,
    lambda_mil: float = 1.0,
    lambda_global: float = 1.0,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Forward the batch and return (mil, global, total) loss tensors.

    Pair i is the positive; z_ij^- pairs track i's tokens against text j's
    tokens for every j != i, mirroring the in-batch negative construction
    of the global loss.
    """
    n = len(tracks)
    if n == 0 or len(texts) != n:
        raise InvalidInputError("tracks and texts must be equal-length, non-empty")
    track_seqs, b_rows, text_seqs, a_rows = [], [], [], []
    for track, text in zip(tracks, texts):
        seq_b, b_hat = model.encode_track(track)
        seq_a, a_hat = model.encode_text(text)
        track_seqs.append(seq_b)
        b_rows.append(b_hat)
        text_seqs.append(seq_a)
        a_rows.append(a_hat)
    z_pos = torch.stack([
        model.evidence(track_seqs[i], text_seqs[i]) for i in range(n)
    ])
    if n > 1:
        z_neg = torch.stack([
            torch.stack([
                model.evidence(track_seqs[i], text_seqs[j])
                for j in range(n) if j != i
            ])
            for i in range(n)
        ])
    else:
        z_neg = torch.zeros((1, 0), dtype=torch.float64)
    mil = mil_loss(z_pos, z_neg, gamma)
    glob = global_infonce(torch.stack(b_rows), torch.stack(a_rows), tau)
    return mil, glob, total_loss(mil, glob, lambda_mil, lambda_global)


def loss_bundle(model: Matcher, tracks, texts, gamma: float = 0.1,
                tau: float = 0.07, lambda_mil: float = 1.0,
                lambda_global: float = 1.0) -> LossBundle:
    """Compute losses and populate gradients for every trainable parameter."""
    model.zero_grad(set_to_none=True)
    mil, glob, total = batch_losses(model, tracks, texts, gamma, tau,
                                    lambda_mil, lambda_global)
    total.backward()
    grads = {
        name: (p.grad.detach().numpy().copy() if p.grad is not None
               else np.zeros(p.shape))
        for name, p in model.named_parameters()
    }
    return LossBundle(mil=float(mil.detach()), global_=float(glob.detach()),
                      total=float(total.detach()), gradients=grads)
