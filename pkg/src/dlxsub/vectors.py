"""Elementary vector and string-distance operations.

All similarity math runs in 64-bit floats regardless of how embeddings are
stored on disk; summing ~20 layer vectors accumulates too much error in
float32. Cosine is always computed as dot/(sqrt(dot)*sqrt(dot)) with one
np.dot per pair so a score is bit-reproducible by independent
recomputation (matmul kernels round differently).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError


@dataclass(frozen=True)
class EmbeddingSpec:
    """Shape contract for layered embeddings: width, model depth, selected layers."""

    dim: int
    num_layers: int
    layer_set: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "layer_set", tuple(int(x) for x in self.layer_set))
        if self.dim <= 0:
            raise ContractError(f"dim must be positive, got {self.dim}")
        if self.num_layers <= 0:
            raise ContractError(f"num_layers must be positive, got {self.num_layers}")
        if not self.layer_set:
            raise ContractError("layer_set must be non-empty")
        if any(b <= a for a, b in zip(self.layer_set, self.layer_set[1:])):
            raise ContractError(f"layer_set must be strictly increasing, got {self.layer_set}")
        if self.layer_set[0] < 1 or self.layer_set[-1] > self.num_layers:
            raise ContractError(
                f"layer indices must lie in [1, {self.num_layers}], got {self.layer_set}"
            )


@dataclass(frozen=True)
class LayeredEmbedding:
    """Per-layer vectors for one word occurrence in one sentence."""

    spec: EmbeddingSpec
    vectors: dict[int, np.ndarray]

    def __post_init__(self):
        if set(self.vectors) != set(self.spec.layer_set):
            raise ContractError(
                f"layer keys {sorted(self.vectors)} do not match layer_set {self.spec.layer_set}"
            )
        for layer, vec in self.vectors.items():
            arr = np.asarray(vec)
            if arr.ndim != 1 or arr.shape[0] != self.spec.dim:
                raise ContractError(
                    f"layer {layer} vector has shape {arr.shape}, expected ({self.spec.dim},)"
                )
            if not np.all(np.isfinite(arr)):
                raise ContractError(f"layer {layer} vector has non-finite components")

    def layer(self, layer: int) -> np.ndarray:
        return self.vectors[layer]


def cosine(u, v) -> float:
    """Cosine similarity of two equal-length vectors, in [-1, 1].

    Equal inputs return exactly 1.0; the rounded x/(sqrt(x)*sqrt(x))
    route can land one ulp off.
    """
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ContractError(f"cosine needs equal-length vectors, got {a.shape} and {b.shape}")
    nu = math.sqrt(float(np.dot(a, a)))
    nv = math.sqrt(float(np.dot(b, b)))
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine is undefined for zero-norm input")
    if np.array_equal(a, b):
        return 1.0
    return float(np.dot(a, b)) / (nu * nv)


def sum_layers(e: LayeredEmbedding) -> np.ndarray:
    """Componentwise sum of the embedding's vectors over its layer set."""
    out = np.zeros(e.spec.dim, dtype=np.float64)
    for layer in e.spec.layer_set:
        out += np.asarray(e.vectors[layer], dtype=np.float64)
    return out


def concat_normalized(e: LayeredEmbedding, per_layer: bool = False) -> np.ndarray:
    """Layer vectors concatenated in increasing layer order, L2-normalised.

    By default the full concatenation is normalised once; with
    per_layer=True each layer vector is normalised before concatenation
    (and the result renormalised).
    """
    parts = []
    for layer in e.spec.layer_set:
        part = np.asarray(e.vectors[layer], dtype=np.float64)
        if per_layer:
            norm = math.sqrt(float(np.dot(part, part)))
            if norm == 0.0:
                raise DomainError(f"layer {layer} vector has zero norm")
            part = part / norm
        parts.append(part)
    flat = np.concatenate(parts)
    norm = math.sqrt(float(np.dot(flat, flat)))
    if norm == 0.0:
        raise DomainError("cannot normalise an all-zero occurrence vector")
    return flat / norm


def restrict_layers(e: LayeredEmbedding, layers: tuple[int, ...]) -> LayeredEmbedding:
    """Project an embedding onto a subset of its layers."""
    missing = [l for l in layers if l not in e.vectors]
    if missing:
        raise ContractError(f"embedding is missing layer {missing[0]}")
    spec = EmbeddingSpec(e.spec.dim, e.spec.num_layers, tuple(sorted(layers)))
    return LayeredEmbedding(spec, {l: e.vectors[l] for l in spec.layer_set})


def levenshtein(a: str, b: str) -> int:
    """Edit distance over character units (insert/delete/substitute, unit cost)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        curr = [i] + [0] * len(b)
        for j, cb in enumerate(b, 1):
            curr[j] = min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = curr
    return prev[-1]


def normalized_edit_distance(a: str, b: str) -> float:
    """Levenshtein distance divided by the longer string's length, in [0, 1].

    Operates on lowercase-folded strings; the substitute vocabulary is
    lowercase by construction.
    """
    if not a or not b:
        raise ContractError("normalized_edit_distance needs non-empty strings")
    a = a.lower()
    b = b.lower()
    return levenshtein(a, b) / max(len(a), len(b))
