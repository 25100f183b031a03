"""Procedural stand-ins for the generator and classifier.

The generator composes per-token interference patterns whose frequencies,
phases and colors are derived from a hash of the token text; a "(token:w)"
weight scales that token's amplitude.  The classifier renders each class
name through the same pattern machinery and scores an image by cosine
similarity to those references.  Everything is a pure function of its
inputs, so fixed (prompt, seed) pairs reproduce byte-identical PNGs.
"""
import hashlib
import io
import struct

import numpy as np
from PIL import Image

from .prompts import parse_weighted_prompt

_WAVES_PER_TOKEN = 4
_FEATURE_SIZE = 16
_TEMPERATURE = 30.0


def _hash_rng(*parts) -> np.random.Generator:
    h = hashlib.sha256()
    for p in parts:
        data = p if isinstance(p, bytes) else str(p).encode("utf-8")
        h.update(struct.pack("<Q", len(data)))
        h.update(data)
    return np.random.default_rng(int.from_bytes(h.digest()[:8], "little"))


def _token_field(token: str, resolution: int) -> np.ndarray:
    """(resolution, resolution, 3) float pattern, fixed per token text.

    Pixel-center coordinates and low frequencies keep the pattern a
    consistent sampling of one continuous field at every resolution, so the
    classifier can compare images across resolutions by downsampling.
    """
    rng = _hash_rng("token", token)
    ax = (np.arange(resolution) + 0.5) / resolution * 2.0 * np.pi
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    field = np.zeros((resolution, resolution, 3))
    for _ in range(_WAVES_PER_TOKEN):
        fx, fy = rng.integers(1, 4, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        color = rng.uniform(-1.0, 1.0, size=3)
        field += np.sin(fx * xx + fy * yy + phase)[:, :, None] * color
    return field


def _to_png(field: np.ndarray) -> bytes:
    lo, hi = field.min(), field.max()
    if hi - lo < 1e-12:
        pixels = np.full(field.shape, 127, dtype=np.uint8)
    else:
        pixels = np.clip((field - lo) / (hi - lo) * 255.0, 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def render_prompt(
    prompt: str,
    resolution: int,
    steps: int,
    seed: int,
    index: int,
    apply_weights: bool = True,
) -> bytes:
    """One PNG; the noise floor shrinks as steps grow."""
    field = np.zeros((resolution, resolution, 3))
    for token, weight in parse_weighted_prompt(prompt):
        w = weight if apply_weights else 1.0
        field += w * _token_field(token, resolution)
    noise_rng = _hash_rng("sample", prompt, seed, index)
    field += noise_rng.standard_normal(field.shape) * (0.5 / max(steps, 1))
    return _to_png(field)


class ProceduralGenerator:
    model_id = "procedural"

    def __init__(self, apply_prompt_weights: bool = True):
        self.apply_prompt_weights = apply_prompt_weights

    def generate(
        self,
        prompt: str,
        n_samples: int,
        steps: int,
        resolution: int,
        seed: int,
        index_offset: int = 0,
    ) -> list[bytes]:
        # Sample i depends only on (prompt, seed, i), so batches can be
        # split anywhere without changing their contents.
        return [
            render_prompt(
                prompt, resolution, steps, seed, index_offset + i,
                self.apply_prompt_weights,
            )
            for i in range(n_samples)
        ]


def _features(image: Image.Image) -> np.ndarray:
    small = image.convert("RGB").resize(
        (_FEATURE_SIZE, _FEATURE_SIZE), Image.BILINEAR
    )
    v = np.asarray(small, dtype=float).ravel()
    v = v - v.mean()
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


class ProceduralClassifier:
    model_id = "procedural"

    def __init__(self):
        self._references: dict[str, np.ndarray] = {}

    def _reference(self, class_name: str) -> np.ndarray:
        if class_name not in self._references:
            png = _to_png(_token_field(class_name, _FEATURE_SIZE))
            self._references[class_name] = _features(Image.open(io.BytesIO(png)))
        return self._references[class_name]

    def classify(self, images: list[bytes], classes: list[str]) -> list[dict]:
        refs = np.stack([self._reference(c) for c in classes])
        out = []
        for data in images:
            feats = _features(Image.open(io.BytesIO(data)))
            logits = _TEMPERATURE * refs @ feats
            logits -= logits.max()
            probs = np.exp(logits)
            probs /= probs.sum()
            out.append({c: float(p) for c, p in zip(classes, probs)})
        return out
