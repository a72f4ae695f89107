"""Sense-clustered decontextualised embedding index.

Each vocabulary word gets a plain average embedding plus up to K cluster
centroids: occurrences are grouped with spherical k-means over their
L2-normalised concatenated layer vectors, and each centroid is the mean
of the layer-sum vectors of that cluster's members.

On disk the index stores 32-bit little-endian floats; all math upcasts
to float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError
from .vectors import EmbeddingSpec, LayeredEmbedding, concat_normalized, sum_layers

MAGIC = b"DLXI"
FORMAT_VERSION = 1

_UNIT_TOL = 1e-6


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: D^2-weighted draws after a uniform first center."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[int(rng.integers(n))]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _repair_empty(assign: np.ndarray, sims: np.ndarray, k: int) -> np.ndarray:
    """Move the point farthest from its own centroid into each empty cluster.

    Only points whose departure leaves their cluster non-empty are eligible,
    so the max over clusters stays well defined.
    """
    counts = np.bincount(assign, minlength=k)
    for j in range(k):
        if counts[j] > 0:
            continue
        own_sim = sims[np.arange(len(assign)), assign]
        eligible = counts[assign] > 1
        candidates = np.where(eligible)[0]
        moved = candidates[int(np.argmin(own_sim[eligible]))]
        counts[assign[moved]] -= 1
        assign[moved] = j
        counts[j] += 1
    return assign


def spherical_kmeans(points, k: int, seed: int, max_iter: int = 100,
                     tol: float = 1e-6) -> tuple[list[int], float]:
    """Cluster unit vectors into min(k, n) non-empty clusters.

    Returns (assignments, inertia) where inertia is the sum of squared
    Euclidean distances to the (unit-normalised) cluster centroids --
    equivalent to the cosine objective on unit vectors. Deterministic
    for a fixed seed.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ContractError("points must be a non-empty 2-D array")
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    norms = np.sqrt(np.sum(pts * pts, axis=1))
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        raise ContractError("points must be unit-norm")

    n = pts.shape[0]
    k_eff = min(k, n)
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(pts, k_eff, rng)
    cn = np.sqrt(np.sum(centers * centers, axis=1))
    centers = centers / np.where(cn > 0, cn, 1.0)[:, None]

    assign = np.full(n, -1, dtype=np.int64)
    prev_inertia = np.inf
    for _ in range(max_iter):
        sims = pts @ centers.T
        new_assign = np.argmax(sims, axis=1)
        new_assign = _repair_empty(new_assign, sims, k_eff)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k_eff):
            members = pts[assign == j]
            mean = members.mean(axis=0)
            norm = float(np.sqrt(np.dot(mean, mean)))
            if norm > 1e-12:
                centers[j] = mean / norm
        inertia = float(np.sum((pts - centers[assign]) ** 2))
        if abs(prev_inertia - inertia) < tol:
            break
        prev_inertia = inertia

    inertia = float(np.sum((pts - centers[assign]) ** 2))
    return [int(a) for a in assign], inertia


@dataclass
class SenseIndexEntry:
    word: str
    mean_embedding: np.ndarray          # float32 (dim,)
    centroids: np.ndarray               # float32 (n_clusters, dim)
    cluster_sizes: tuple[int, ...]
    occurrence_count: int

    def check(self) -> None:
        nc = self.centroids.shape[0]
        if nc < 1 or nc != len(self.cluster_sizes):
            raise ContractError(f"{self.word}: centroid/size count mismatch")
        if any(s < 1 for s in self.cluster_sizes):
            raise ContractError(f"{self.word}: empty cluster")
        if sum(self.cluster_sizes) != self.occurrence_count:
            raise ContractError(f"{self.word}: cluster sizes do not sum to occurrence count")
        weights = np.asarray(self.cluster_sizes, dtype=np.float64)
        weighted = (weights[:, None] * self.centroids.astype(np.float64)).sum(axis=0)
        weighted /= weights.sum()
        if not np.allclose(weighted, self.mean_embedding.astype(np.float64),
                           rtol=1e-6, atol=1e-6):
            raise ContractError(f"{self.word}: mean is not the weighted centroid mean")


@dataclass
class SenseIndex:
    dim: int
    k: int
    entries: dict[str, SenseIndexEntry]
    spec: EmbeddingSpec | None = None
    view_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.entries)


def build_entry(word: str, occurrences: list[LayeredEmbedding], k: int, seed: int,
                per_layer_norm: bool = False) -> SenseIndexEntry:
    """Cluster one word's occurrence embeddings and average per cluster.

    Assignment runs on the normalised concatenated layer vectors; the
    stored centroids and mean are averages of the plain layer-sum vectors.
    """
    if not occurrences:
        raise ContractError(f"{word}: no occurrences to build from")
    points = np.stack([concat_normalized(e, per_layer=per_layer_norm) for e in occurrences])
    assign, _ = spherical_kmeans(points, k, seed)
    sums = np.stack([sum_layers(e) for e in occurrences])
    labels = np.asarray(assign)
    n_clusters = int(labels.max()) + 1
    centroids = np.stack([sums[labels == j].mean(axis=0) for j in range(n_clusters)])
    sizes = tuple(int(np.sum(labels == j)) for j in range(n_clusters))
    entry = SenseIndexEntry(
        word=word,
        mean_embedding=sums.mean(axis=0).astype(np.float32),
        centroids=centroids.astype(np.float32),
        cluster_sizes=sizes,
        occurrence_count=len(occurrences),
    )
    entry.check()
    return entry


def save_index(index: SenseIndex, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HIHI", FORMAT_VERSION, index.dim, index.k, len(index.entries)))
        for entry in index.entries.values():
            word_bytes = entry.word.encode("utf-8")
            if len(word_bytes) > 0xFFFF:
                raise ContractError(f"word too long: {entry.word[:32]}...")
            fh.write(struct.pack("<H", len(word_bytes)))
            fh.write(word_bytes)
            fh.write(struct.pack("<IB", entry.occurrence_count, entry.centroids.shape[0]))
            fh.write(np.asarray(entry.cluster_sizes, dtype="<u4").tobytes())
            fh.write(np.ascontiguousarray(entry.centroids, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(entry.mean_embedding, dtype="<f4").tobytes())


def load_index(path) -> SenseIndex:
    blob = Path(path).read_bytes()
    pos = 0

    def need(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise FormatError(f"truncated index file while reading {what}",
                              path=str(path), offset=pos)
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    if need(4, "magic") != MAGIC:
        raise FormatError("bad magic, not an index file", path=str(path), offset=0)
    version, dim, k, count = struct.unpack("<HIHI", need(12, "header"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", path=str(path), offset=4)
    if dim < 1 or k < 1:
        raise FormatError(f"invalid header (dim={dim}, k={k})", path=str(path), offset=6)

    entries: dict[str, SenseIndexEntry] = {}
    for i in range(count):
        (wlen,) = struct.unpack("<H", need(2, f"entry {i} word length"))
        word = need(wlen, f"entry {i} word").decode("utf-8")
        occ, nc = struct.unpack("<IB", need(5, f"entry {i} counts"))
        if nc < 1 or nc > k:
            raise FormatError(f"entry {i} ({word}): cluster count {nc} out of range",
                              path=str(path), offset=pos - 1)
        sizes = np.frombuffer(need(4 * nc, f"entry {i} cluster sizes"), dtype="<u4")
        cents = np.frombuffer(need(4 * nc * dim, f"entry {i} centroids"), dtype="<f4")
        mean = np.frombuffer(need(4 * dim, f"entry {i} mean"), dtype="<f4")
        if int(sizes.sum()) != occ:
            raise FormatError(f"entry {i} ({word}): sizes {sizes.tolist()} do not sum to {occ}",
                              path=str(path), offset=pos)
        if word in entries:
            raise FormatError(f"duplicate entry for {word!r}", path=str(path), offset=pos)
        entries[word] = SenseIndexEntry(
            word=word,
            mean_embedding=mean.copy(),
            centroids=cents.copy().reshape(nc, dim),
            cluster_sizes=tuple(int(s) for s in sizes),
            occurrence_count=int(occ),
        )
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes after last entry",
                          path=str(path), offset=pos)
    return SenseIndex(dim=dim, k=k, entries=entries)
