"""End-to-end pipelines behind the service endpoints and the CLI.

Each function does the file plumbing around one engine stage and returns
a JSON-friendly summary. All paths are resolved on the machine running
the service (with the default in-process client that is the caller's own
filesystem).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import analysis, metrics, vocab
from .config import RunConfig
from .engine import GenerationConfig, ScoredCandidate, SubstitutionQuery, generate, rerank
from .errors import ConfigError, DataError, NotFoundError, ParseError
from .index import SenseIndex, build_entry, load_index, save_index
from .metrics import GOLD_HEADER, IDENTITY, GoldItem, LemmaTable, ReportRow
from .provider import make_provider, make_stub_batch, read_batch, write_batch
from .seeds import derive_seed
from .vectors import EmbeddingSpec


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise NotFoundError(f"{what} not found: {p}")
    return p


class IndexCache:
    """mtime-checked cache so a long-running service loads each index once."""

    def __init__(self):
        self._cache: dict[str, tuple[float, SenseIndex]] = {}

    def get(self, path) -> SenseIndex:
        p = _require(path, "index file")
        key = str(p.resolve())
        mtime = p.stat().st_mtime
        hit = self._cache.get(key)
        if hit is None or hit[0] != mtime:
            self._cache[key] = (mtime, load_index(p))
        return self._cache[key][1]


def run_build_vocab(corpus_path, size: int, output_path) -> dict:
    sentences = vocab.read_sentences(_require(corpus_path, "corpus"))
    counts = vocab.token_counts(sentences)
    build = vocab.build_vocab(counts, size)
    vocab.write_vocab(build, output_path)
    return {
        "kept": len(build.entries),
        "requested": size,
        "complete": build.complete,
        "distinct_tokens": len(counts),
        "output_path": str(output_path),
    }


def run_make_manifest(corpus_path, vocab_path, n: int, seed: int, output_path) -> dict:
    sentences = vocab.read_sentences(_require(corpus_path, "corpus"))
    entries = vocab.read_vocab(_require(vocab_path, "vocabulary"))
    occ = vocab.occurrence_index(sentences, words={e.word for e in entries})
    manifests = []
    skipped = 0
    for entry in entries:
        if entry.word not in occ:
            skipped += 1
            continue
        manifests.append(vocab.sample_contexts(entry.word, occ, n, seed))
    vocab.write_manifest(manifests, output_path)
    rows = sum(len(m.occurrences) for m in manifests)
    return {"words": len(manifests), "rows": rows, "skipped": skipped,
            "output_path": str(output_path)}


def run_stub_batch(corpus_path, manifest_path, dim: int, layers: tuple[int, ...],
                   seed: int, output_path) -> dict:
    sentences = vocab.read_sentences(_require(corpus_path, "corpus"))
    rows = vocab.read_manifest(_require(manifest_path, "manifest"))
    spec = EmbeddingSpec(dim=dim, num_layers=max(layers), layer_set=tuple(layers))
    batch = make_stub_batch(sentences, rows, spec, seed)
    write_batch(batch, output_path)
    return {"records": len(batch.records), "dim": dim, "layers": list(layers),
            "output_path": str(output_path)}


def run_build_index(batch_paths, k: int, seed: int, output_path,
                    threads: int = 1) -> dict:
    batches = [read_batch(_require(p, "batch file")) for p in batch_paths]
    if not batches:
        raise ConfigError("no batch files given")
    spec = batches[0].spec
    for i, batch in enumerate(batches[1:], 1):
        if batch.spec != spec:
            raise DataError(
                f"batch {batch_paths[i]} spec {batch.spec} differs from {spec}")

    by_word: dict[str, list] = {}
    for batch in batches:
        for rec in batch.records:
            by_word.setdefault(rec.word, []).append(rec.embedding(spec))

    def build_one(word: str):
        return build_entry(word, by_word[word], k, derive_seed(seed, "kmeans", word))

    words = list(by_word)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(build_one, words))
    else:
        entries = [build_one(w) for w in words]

    index = SenseIndex(dim=spec.dim, k=k,
                       entries={e.word: e for e in entries}, spec=spec)
    save_index(index, output_path)
    return {"words": len(entries), "dim": spec.dim, "k": k,
            "layers": list(spec.layer_set),
            "output_path": str(output_path),
            "bytes": os.path.getsize(output_path)}


# ---------------------------------------------------------------------------
# queries and gold

def load_gold(path, fmt: str = "auto") -> list[GoldItem]:
    p = _require(path, "gold file")
    if fmt == "auto":
        with open(p, encoding="utf-8") as fh:
            first = fh.readline().strip()
        fmt = "native" if first == GOLD_HEADER else "semeval"
    if fmt == "native":
        return metrics.parse_gold_native(p)
    if fmt == "semeval":
        return metrics.parse_semeval(p)
    raise ConfigError(f"unknown gold format {fmt!r}")


def load_queries(path) -> list[tuple[str, SubstitutionQuery]]:
    """Queries from a gold file or a plain `id<TAB>start<TAB>end<TAB>sentence` TSV."""
    p = _require(path, "queries file")
    with open(p, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first == GOLD_HEADER:
        items = metrics.parse_gold_native(p)
        return [(it.instance_id,
                 SubstitutionQuery(it.sentence, it.start, it.end, it.target_word))
                for it in items]
    queries = []
    seen = set()
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t", 3)
            if len(parts) != 4:
                raise ParseError("expected id<TAB>start<TAB>end<TAB>sentence",
                                 path=str(p), line=lineno)
            iid, start_s, end_s, sentence = parts
            if iid in seen:
                raise ParseError(f"duplicate instance id {iid!r}", path=str(p), line=lineno)
            seen.add(iid)
            try:
                start, end = int(start_s), int(end_s)
            except ValueError:
                raise ParseError("non-integer span", path=str(p), line=lineno)
            target = sentence.encode("utf-8")[start:end].decode("utf-8").lower()
            queries.append((iid, SubstitutionQuery(sentence, start, end, target)))
    return queries


def _provider_for(cfg: RunConfig, index: SenseIndex | None = None):
    endpoint = cfg.provider
    if not endpoint:
        raise ConfigError("no provider endpoint configured (flag, config key, or env)")
    spec = None
    if endpoint.startswith("stub"):
        dim = cfg.dim or (index.dim if index is not None else None)
        if dim is None or cfg.layers is None:
            raise ConfigError("stub provider needs dim and layers (flags or config)")
        spec = EmbeddingSpec(dim=dim, num_layers=max(cfg.layers), layer_set=cfg.layers)
    return make_provider(endpoint, spec)


def _generation_config(cfg: RunConfig, **overrides) -> GenerationConfig:
    base = dict(
        lambda_=cfg.lambda_,
        heuristic_threshold=cfg.threshold,
        rerank_m=cfg.rerank_m,
        top_n=cfg.top_n,
        seed=cfg.seed,
    )
    base.update(overrides)
    return GenerationConfig(**base)


def _lemma_table(cfg: RunConfig) -> LemmaTable | None:
    if cfg.lemma_table:
        return LemmaTable.load(_require(cfg.lemma_table, "lemma table"))
    return None


def run_substitute(cfg: RunConfig, index_cache: IndexCache | None = None,
                   gen_overrides: dict | None = None, output_path=None) -> dict:
    if not cfg.index:
        raise ConfigError("substitute needs an index path")
    if not cfg.gold:
        raise ConfigError("substitute needs a queries/gold path")
    index = (index_cache or IndexCache()).get(cfg.index)
    queries = load_queries(cfg.gold)
    provider = _provider_for(cfg, index)
    gen_cfg = _generation_config(cfg, **(gen_overrides or {}))
    lemma = _lemma_table(cfg)

    predictions: dict[str, list[tuple[str, float]]] = {}
    for iid, query in queries:
        ranked = generate(query, index, provider, gen_cfg,
                          lemma_table=lemma, layers=cfg.layers)
        predictions[iid] = [(c.word, c.score) for c in ranked]

    out = output_path or cfg.output
    if out:
        metrics.write_predictions(predictions, out)
    return {
        "instances": len(predictions),
        "output_path": str(out) if out else None,
        "predictions": {iid: [{"word": w, "score": s} for w, s in scored]
                        for iid, scored in predictions.items()},
    }


def run_rank_candidates(cfg: RunConfig, output_path=None) -> dict:
    """Score each item's annotated candidate pool in context and rank it."""
    if not cfg.gold:
        raise ConfigError("rank-candidates needs a gold path")
    items = load_gold(cfg.gold, "native")
    provider = _provider_for(cfg)

    predictions: dict[str, list[tuple[str, float]]] = {}
    skipped = 0
    for item in items:
        pool = sorted(item.candidate_pool - {item.target_word})
        if not pool:
            skipped += 1
            continue
        query = SubstitutionQuery(item.sentence, item.start, item.end, item.target_word)
        seeds_ = [ScoredCandidate(word=w, score=0.0, best_cluster=0,
                                  in_context=0.0, global_sim=0.0) for w in pool]
        ranked = rerank(seeds_, query, provider, layers=cfg.layers)
        predictions[item.instance_id] = [(c.word, c.score) for c in ranked]

    out = output_path or cfg.output
    if out:
        metrics.write_predictions(predictions, out)
    return {"instances": len(predictions), "skipped": skipped,
            "output_path": str(out) if out else None,
            "predictions": {iid: [{"word": w, "score": s} for w, s in scored]
                            for iid, scored in predictions.items()}}


def run_evaluate(cfg: RunConfig, settings=("strict", "lenient"), micro: bool = False,
                 gold_format: str = "auto", append_unscored_seed: int | None = None,
                 top_n: int | None = None, output_path=None) -> dict:
    if not cfg.gold or not cfg.predictions:
        raise ConfigError("evaluate needs gold and predictions paths")
    items = load_gold(cfg.gold, gold_format)
    predictions = metrics.read_predictions(_require(cfg.predictions, "predictions"))
    lemma = _lemma_table(cfg) or IDENTITY

    rows: list[ReportRow] = []
    has_sentences = any(it.sentence for it in items)
    if has_sentences:
        rows += metrics.evaluate_generation(items, predictions, lemma,
                                            top_n=top_n or cfg.top_n,
                                            settings=settings, micro=micro)
    rows += metrics.evaluate_ranking(items, predictions, lemma,
                                     append_unscored_seed=append_unscored_seed)
    rows += metrics.evaluate_best_oot(items, predictions, lemma)

    out = output_path or cfg.output
    if out:
        metrics.write_report(rows, out)
    return {"rows": [{"metric": r.metric, "setting": r.setting, "value": r.value}
                     for r in rows],
            "output_path": str(out) if out else None}


def run_analyze(cfg: RunConfig, top_n: int = 10, output_path=None,
                sweep_indexes: dict[int, str] | None = None,
                sweep_combined: str | None = None,
                sweep_metric: str = "F_c", sweep_setting: str = "strict") -> dict:
    if not cfg.gold:
        raise ConfigError("analyze needs a gold path")
    items = load_gold(cfg.gold)
    lemma = _lemma_table(cfg) or IDENTITY
    rows: list[ReportRow] = []

    predictions = {}
    if cfg.predictions:
        predictions = metrics.read_predictions(_require(cfg.predictions, "predictions"))

    if cfg.lexicon:
        lexicon = analysis.AgreementLexicon.load(_require(cfg.lexicon, "lexicon"))
        articles = (analysis.PHONETIC_ARTICLES if lexicon.mode == "phonetic"
                    else analysis.GENDER_ARTICLES)
        per_article: dict[str, list[int]] = {a: [0, 0] for a in articles}
        for item in items:
            article = _preceding_article(item)
            if article not in per_article:
                continue
            pred = predictions.get(item.instance_id, [])
            agree, known = analysis.agreement_counts(pred[:top_n], article, lexicon, top_n)
            per_article[article][0] += agree
            per_article[article][1] += known
        for article, (agree, known) in per_article.items():
            if known:
                rows.append(ReportRow("agreement", article, agree / known))
            rows.append(ReportRow("agreement_n", article, float(known)))

    if cfg.freq_table:
        table = analysis.FrequencyTable.load(_require(cfg.freq_table, "frequency table"))
        matched: list[str] = []
        for item in items:
            gold = set(metrics.fold_weights(item.weights(), lemma))
            pred = metrics.fold_top_n(predictions.get(item.instance_id, []), lemma, n=top_n)
            matched.extend(w for w in pred if w in gold)
        buckets = analysis.freq_buckets(matched, table)
        rows += [ReportRow("freq", "low", float(buckets.low)),
                 ReportRow("freq", "med", float(buckets.med)),
                 ReportRow("freq", "high", float(buckets.high)),
                 ReportRow("freq", "unknown", float(buckets.unknown))]

    if sweep_indexes:
        rows += _sweep_rows(cfg, items, sweep_indexes, sweep_combined,
                            sweep_metric, sweep_setting)

    out = output_path or cfg.output
    if out:
        metrics.write_report(rows, out)
    return {"rows": [{"metric": r.metric, "setting": r.setting, "value": r.value}
                     for r in rows],
            "output_path": str(out) if out else None}


def _preceding_article(item: GoldItem) -> str | None:
    prefix = item.sentence.encode("utf-8")[: item.start].decode("utf-8", "ignore")
    tokens = prefix.split()
    return tokens[-1].lower() if tokens else None


def _sweep_rows(cfg: RunConfig, items, sweep_indexes: dict[int, str],
                sweep_combined: str | None, metric: str, setting: str) -> list[ReportRow]:
    cache = IndexCache()
    per_layer = {}
    for layer, path in sweep_indexes.items():
        if not Path(path).exists():
            raise NotFoundError(f"no index for layer {layer}: {path}")
        per_layer[layer] = cache.get(path)
    combined = cache.get(sweep_combined) if sweep_combined else None
    lemma = _lemma_table(cfg) or IDENTITY

    queries = [(it.instance_id, SubstitutionQuery(it.sentence, it.start, it.end,
                                                  it.target_word)) for it in items]

    def evaluate(index: SenseIndex, layers: tuple[int, ...] | None) -> float:
        layer_cfg = cfg.with_overrides(layers=layers or cfg.layers)
        provider = _provider_for(layer_cfg, index)
        gen_cfg = _generation_config(layer_cfg, rerank_enabled=False)
        preds = {}
        for iid, query in queries:
            ranked = generate(query, index, provider, gen_cfg,
                              lemma_table=lemma, layers=layer_cfg.layers)
            preds[iid] = [c.word for c in ranked]
        rows = metrics.evaluate_generation(items, preds, lemma, top_n=cfg.top_n,
                                           settings=(setting,))
        for row in rows:
            if row.metric == metric and row.setting == setting:
                return row.value
        raise DataError(f"sweep metric {metric}/{setting} not produced")

    series = analysis.layer_sweep(per_layer, evaluate, combined)
    return [ReportRow("sweep", label, value) for label, value in series]


ABLATION_TAGS = ("lambda0", "lambda1", "k1", "random-cluster", "no-heuristic", "no-rerank")


def ablation_overrides(tag: str) -> dict:
    table = {
        "lambda0": {"lambda_": 0.0},
        "lambda1": {"lambda_": 1.0},
        "k1": {"k_override": 1},
        "random-cluster": {"cluster_choice": "random"},
        "no-heuristic": {"heuristic_enabled": False},
        "no-rerank": {"rerank_enabled": False},
    }
    if tag not in table:
        raise ConfigError(f"unknown ablation tag {tag!r}")
    return table[tag]


def run_ablate(cfg: RunConfig, output_dir, tags=ABLATION_TAGS,
               base_overrides: dict | None = None) -> dict:
    """One prediction file per configuration, each a single deviation from
    the base config (pass rerank_enabled=False in base_overrides to run the
    grid without reranking, as when vocabularies are smaller than M)."""
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for tag in tags:
        overrides = dict(base_overrides or {})
        overrides.update(ablation_overrides(tag))
        path = out_dir / f"pred_{tag}.tsv"
        run_substitute(cfg, gen_overrides=overrides, output_path=path)
        files[tag] = str(path)
    return {"files": files}
