"""Encoder registry.

``tiny`` is a dependency-light deterministic encoder for pipelines that
only need stable, content-derived vectors (smoke tests, synthetic runs).
``clip`` adapts a pretrained vision-language model when transformers and
its weights are available; selecting it without them raises a clear error.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

_PROJECTION_SEED = 0x534D4542  # fixed, so exports are reproducible everywhere
_PATCH = 16


class TinyEncoder:
    """Deterministic image/text encoder with no model weights.

    Images: grayscale 16x16 thumbnail, flattened and passed through a
    fixed random projection.  Texts: hashed byte trigrams accumulated
    into sign buckets.  Both outputs are L2-normalized float32.
    """

    name = "tiny"

    def __init__(self, dim: int = 64):
        self.dim = dim
        rng = np.random.default_rng(_PROJECTION_SEED)
        self._projection = rng.normal(size=(_PATCH * _PATCH, dim)).astype(np.float64)

    def encode_image(self, path) -> np.ndarray:
        with Image.open(path) as img:
            gray = img.convert("L").resize((_PATCH, _PATCH), Image.BILINEAR)
        flat = np.asarray(gray, dtype=np.float64).reshape(-1) / 255.0
        vec = flat @ self._projection
        return _unit(vec)

    def encode_text(self, text: str) -> np.ndarray:
        data = text.encode("utf-8")
        vec = np.zeros(self.dim, dtype=np.float64)
        if len(data) < 3:
            data = data + b"\x00" * (3 - len(data))
        for i in range(len(data) - 2):
            digest = hashlib.blake2b(data[i : i + 3], digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            idx = value % self.dim
            sign = 1.0 if (value >> 32) & 1 else -1.0
            vec[idx] += sign
        return _unit(vec)

    def encode_text_tokens(self, text: str, max_tokens: int = 16) -> np.ndarray:
        """One row per whitespace token (the matcher's text-token pathway);
        falls back to a single pooled row for empty input."""
        words = text.split()[:max_tokens]
        if not words:
            return self.encode_text(text)[None, :]
        return np.stack([self.encode_text(w) for w in words])


class ClipEncoder:
    """Pretrained vision-language encoder adapter (optional dependency)."""

    name = "clip"

    def __init__(self, model_name: str = "openai/clip-vit-large-patch14"):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise RuntimeError(
                "the 'clip' encoder needs the [clip] extra: "
                "pip install smine-export[clip]"
            ) from exc
        self._torch = __import__("torch")
        self.model = CLIPModel.from_pretrained(model_name)
        self.model.eval()
        self.processor = CLIPProcessor.from_pretrained(model_name)
        self.dim = self.model.config.projection_dim

    def encode_image(self, path) -> np.ndarray:
        with Image.open(path) as img:
            inputs = self.processor(images=img.convert("RGB"), return_tensors="pt")
        with self._torch.no_grad():
            feats = self.model.get_image_features(**inputs)[0]
        return _unit(feats.numpy().astype(np.float64))

    def encode_text(self, text: str) -> np.ndarray:
        inputs = self.processor(text=[text], return_tensors="pt",
                                padding=True, truncation=True)
        with self._torch.no_grad():
            feats = self.model.get_text_features(**inputs)[0]
        return _unit(feats.numpy().astype(np.float64))

    def encode_text_tokens(self, text: str, max_tokens: int = 16) -> np.ndarray:
        return self.encode_text(text)[None, :]


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        out = np.zeros_like(vec, dtype=np.float32)
        out[0] = 1.0
        return out
    return (vec / norm).astype(np.float32)


def make_encoder(name: str, dim: int = 64, model_name: str = ""):
    if name == "tiny":
        return TinyEncoder(dim=dim)
    if name == "clip":
        return ClipEncoder(model_name) if model_name else ClipEncoder()
    raise ValueError(f"unknown encoder {name!r} (known: tiny, clip)")
