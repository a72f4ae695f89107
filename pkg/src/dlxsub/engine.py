"""Substitute generation: scoring, the edit-distance heuristic, reranking.

A candidate y is scored against the target's in-context vector by the
best of its sense centroids, mixed with a global term that compares the
candidate against the target's own retrieved sense centroid:

    score(y) = max_k [ lambda * cos(centroid_k(y), f(x,c))
                       + (1 - lambda) * cos(centroid_k(y), centroid_{j}(x)) ]

where j is the target cluster closest to f(x,c). Targets missing from
the index force lambda = 1 and drop the global term. The top M survivors
are optionally rescored by the mean per-layer cosine between the
candidate-substituted sentence and the original one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ContractError, DomainError, ProviderError
from .index import SenseIndex, SenseIndexEntry
from .provider import InContextRequest, RequestFailure, span_text
from .seeds import derive_seed
from .vectors import (LayeredEmbedding, cosine, normalized_edit_distance,
                      restrict_layers, sum_layers)


@dataclass(frozen=True)
class SubstitutionQuery:
    sentence: str
    start: int
    end: int
    target_word: str

    def __post_init__(self):
        text = span_text(self.sentence, self.start, self.end)
        if text.lower() != self.target_word.lower():
            raise ContractError(
                f"span text {text!r} does not match target {self.target_word!r}")


@dataclass
class ScoredCandidate:
    word: str
    score: float
    best_cluster: int
    in_context: float
    global_sim: float
    rerank_failed: bool = False


@dataclass(frozen=True)
class GenerationConfig:
    lambda_: float = 0.7
    heuristic_threshold: float = 0.5
    rerank_m: int = 50
    top_n: int = 10
    rerank_enabled: bool = True
    heuristic_enabled: bool = True
    k_override: int | None = None          # 1 collapses every word to its mean embedding
    cluster_choice: str = "max"            # "max" or "random" (seeded draw per candidate)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lambda_}")
        if not 0.0 <= self.heuristic_threshold <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {self.heuristic_threshold}")
        if self.rerank_m < 1 or self.top_n < 1:
            raise ConfigError("rerank_m and top_n must be positive")
        if self.k_override is not None and self.k_override != 1:
            raise ConfigError("k_override only supports 1 (mean-embedding scoring)")
        if self.cluster_choice not in ("max", "random"):
            raise ConfigError(f"unknown cluster_choice {self.cluster_choice!r}")


class _ScoringView:
    """Flattened per-cluster rows for one index + cluster-count override."""

    def __init__(self, index: SenseIndex, k_override: int | None):
        rows = []
        words = []
        offsets = [0]
        for entry in index.entries.values():
            if k_override == 1:
                rows.append(entry.mean_embedding.astype(np.float64)[None, :])
            else:
                rows.append(entry.centroids.astype(np.float64))
            words.append(entry.word)
            offsets.append(offsets[-1] + rows[-1].shape[0])
        self.words = words
        self.offsets = offsets
        self.rows = np.concatenate(rows, axis=0) if rows else np.zeros((0, index.dim))
        self.norms = np.array([math.sqrt(float(np.dot(r, r))) for r in self.rows])

    def cosines(self, q: np.ndarray) -> np.ndarray:
        qn = math.sqrt(float(np.dot(q, q)))
        if qn == 0.0:
            raise DomainError("query vector has zero norm")
        out = np.empty(len(self.rows), dtype=np.float64)
        for i in range(len(self.rows)):
            # row-wise dot keeps each cosine identical to an independent
            # single-pair recomputation; matmul kernels round differently
            out[i] = float(np.dot(self.rows[i], q)) / (self.norms[i] * qn)
        return out


def _view(index: SenseIndex, k_override: int | None) -> _ScoringView:
    key = ("view", k_override)
    if key not in index.view_cache:
        index.view_cache[key] = _ScoringView(index, k_override)
    return index.view_cache[key]


def target_embedding(query: SubstitutionQuery, provider,
                     layers: tuple[int, ...] | None = None) -> LayeredEmbedding:
    """Per-layer vectors for the target span, via the provider."""
    results = provider.fetch([InContextRequest(query.sentence, query.start, query.end)])
    (result,) = results
    if isinstance(result, RequestFailure):
        raise ProviderError(f"target embedding failed: {result.message}")
    if layers is not None:
        result = restrict_layers(result, layers)
    return result


def retrieve_target_cluster(entry: SenseIndexEntry, fxc: np.ndarray) -> int:
    """Target cluster whose centroid is most cosine-similar to f(x,c); ties -> lowest id."""
    best_id = 0
    best = -math.inf
    for j in range(entry.centroids.shape[0]):
        sim = cosine(entry.centroids[j].astype(np.float64), fxc)
        if sim > best:
            best = sim
            best_id = j
    return best_id


def score_all(fxc: np.ndarray, target_entry: SenseIndexEntry | None,
              index: SenseIndex, cfg: GenerationConfig) -> list[ScoredCandidate]:
    """Score every vocabulary word; descending, ties broken by word.

    A missing target entry forces lambda = 1 (the global term needs the
    target's own centroids).
    """
    view = _view(index, cfg.k_override)
    lam = cfg.lambda_ if target_entry is not None else 1.0

    in_ctx = view.cosines(np.asarray(fxc, dtype=np.float64))
    if target_entry is not None:
        if cfg.k_override == 1:
            target_centroid = target_entry.mean_embedding.astype(np.float64)
        else:
            j_c = retrieve_target_cluster(target_entry, fxc)
            target_centroid = target_entry.centroids[j_c].astype(np.float64)
        global_sim = view.cosines(target_centroid)
    else:
        global_sim = np.zeros(len(view.rows))

    mixed = lam * in_ctx + (1.0 - lam) * global_sim

    candidates = []
    for w, word in enumerate(view.words):
        a, b = view.offsets[w], view.offsets[w + 1]
        if cfg.cluster_choice == "random" and b - a > 1:
            rng = np.random.default_rng(derive_seed(cfg.seed, "random-k", word))
            k = a + int(rng.integers(b - a))
        else:
            k = a + int(np.argmax(mixed[a:b]))
        candidates.append(ScoredCandidate(
            word=word,
            score=float(mixed[k]),
            best_cluster=k - a,
            in_context=float(in_ctx[k]),
            global_sim=float(global_sim[k]),
        ))
    candidates.sort(key=lambda c: (-c.score, c.word))
    return candidates


def heuristic_filter(candidates: list[ScoredCandidate], target_word: str,
                     threshold: float) -> list[ScoredCandidate]:
    """Drop candidates whose normalised edit distance to the target is below threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ContractError(f"threshold must be in [0, 1], got {threshold}")
    return [c for c in candidates
            if normalized_edit_distance(target_word, c.word) >= threshold]


def rerank(top_m: list[ScoredCandidate], query: SubstitutionQuery, provider,
           target_emb: LayeredEmbedding | None = None,
           layers: tuple[int, ...] | None = None) -> list[ScoredCandidate]:
    """Rescore candidates by mean per-layer cosine against the original sentence.

    Cosines are averaged across layers (not embeddings averaged first).
    A failed candidate keeps its previous score and is flagged.
    """
    if not top_m:
        raise ContractError("rerank needs a non-empty candidate list")
    if target_emb is None:
        target_emb = target_embedding(query, provider, layers)
    elif layers is not None:
        target_emb = restrict_layers(target_emb, layers)
    layer_set = target_emb.spec.layer_set

    requests = [InContextRequest(query.sentence, query.start, query.end, replacement=c.word)
                for c in top_m]
    results = provider.fetch(requests)

    rescored = []
    for cand, res in zip(top_m, results):
        if isinstance(res, RequestFailure):
            rescored.append(replace_candidate(cand, cand.score, failed=True))
            continue
        emb = restrict_layers(res, layer_set) if set(res.vectors) != set(layer_set) else res
        total = 0.0
        for layer in layer_set:
            total += cosine(emb.vectors[layer], target_emb.vectors[layer])
        rescored.append(replace_candidate(cand, total / len(layer_set)))
    rescored.sort(key=lambda c: (-c.score, c.word))
    return rescored


def replace_candidate(cand: ScoredCandidate, score: float,
                      failed: bool = False) -> ScoredCandidate:
    return replace(cand, score=score, rerank_failed=failed)


def generate(query: SubstitutionQuery, index: SenseIndex, provider,
             cfg: GenerationConfig, lemma_table=None,
             layers: tuple[int, ...] | None = None) -> list[ScoredCandidate]:
    """Full pipeline: score, drop the target itself, filter, rerank, fold to top n."""
    emb = target_embedding(query, provider, layers)
    fxc = sum_layers(emb)
    target_key = query.target_word.lower()
    entry = index.entries.get(target_key)

    ranked = score_all(fxc, entry, index, cfg)
    ranked = [c for c in ranked if c.word != target_key]
    if cfg.heuristic_enabled:
        ranked = heuristic_filter(ranked, target_key, cfg.heuristic_threshold)
    top = ranked[: cfg.rerank_m]
    if cfg.rerank_enabled and top:
        top = rerank(top, query, provider, target_emb=emb)

    folded: list[ScoredCandidate] = []
    seen: set[str] = set()
    for cand in top:
        word = lemma_table.fold(cand.word) if lemma_table is not None else cand.word
        if word in seen:
            continue
        seen.add(word)
        folded.append(replace(cand, word=word) if word != cand.word else cand)
        if len(folded) == cfg.top_n:
            break
    return folded
