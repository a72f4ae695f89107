"""Command-line client for the engine service.

Every subcommand marshals its arguments into a service request. By
default the service app runs in-process (same filesystem, no network);
--server or DLXSUB_SERVER points the same commands at a running
deployment. DLXSUB_PROVIDER overrides the extractor endpoint.
"""

from __future__ import annotations

import json
import os
import sys

import click
import httpx

from .config import RunConfig, load_config, parse_layers
from .errors import ConfigError

_EXIT_BY_KIND = {"config": 2, "data": 3, "provider": 4}


def _client(server: str | None):
    server = server or os.environ.get("DLXSUB_SERVER")
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service.app import app

    return TestClient(app, raise_server_exceptions=False)


def _call(ctx, method: str, path: str, payload: dict | None = None,
          params: dict | None = None) -> dict:
    client = _client(ctx.obj.get("server"))
    try:
        if method == "GET":
            resp = client.get(path, params=params)
        else:
            resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        click.echo(f"error: cannot reach server: {exc}", err=True)
        sys.exit(1)
    if resp.status_code >= 400:
        try:
            error = resp.json().get("error", {})
        except json.JSONDecodeError:
            error = {}
        kind = error.get("kind", "internal")
        click.echo(f"error ({kind}): {error.get('message', resp.text)}", err=True)
        sys.exit(_EXIT_BY_KIND.get(kind, 1))
    return resp.json()


def _config(ctx, **overrides) -> RunConfig:
    try:
        cfg: RunConfig = ctx.obj["config"]
        if "layers" in overrides and isinstance(overrides["layers"], str):
            overrides["layers"] = parse_layers(overrides["layers"])
        cfg = cfg.with_overrides(**overrides)
        if cfg.provider is None and os.environ.get("DLXSUB_PROVIDER"):
            cfg = cfg.with_overrides(provider=os.environ["DLXSUB_PROVIDER"])
        return cfg
    except ConfigError as exc:
        click.echo(f"error (config): {exc}", err=True)
        sys.exit(2)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Flat key=value config file; flags override it.")
@click.option("--server", default=None, help="Remote service URL (default: in-process).")
@click.pass_context
def main(ctx, config_path, server):
    """Lexical substitution over sense-clustered decontextualised embeddings."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server
    try:
        ctx.obj["config"] = load_config(config_path) if config_path else RunConfig()
    except (ConfigError, OSError) as exc:
        click.echo(f"error (config): {exc}", err=True)
        sys.exit(2)


@main.command("build-vocab")
@click.option("--corpus", required=False, type=click.Path())
@click.option("--size", type=int, default=None)
@click.option("--output", "-o", required=False, type=click.Path())
@click.pass_context
def cmd_build_vocab(ctx, corpus, size, output):
    """Count corpus tokens and keep the most frequent lexical items."""
    cfg = _config(ctx, corpus=corpus, vocab_size=size, output=output)
    if not cfg.corpus or not cfg.output:
        click.echo("error (config): build-vocab needs --corpus and --output", err=True)
        sys.exit(2)
    data = _call(ctx, "POST", "/vocab/build", {
        "corpus_path": cfg.corpus, "size": cfg.vocab_size, "output_path": cfg.output})
    note = "" if data["complete"] else " (fewer tokens survived the filter than requested)"
    click.echo(f"kept {data['kept']}/{data['requested']} words -> {data['output_path']}{note}")


@main.command("make-manifest")
@click.option("--corpus", type=click.Path())
@click.option("--vocab", type=click.Path())
@click.option("--n-contexts", "-n", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--output", "-o", type=click.Path())
@click.pass_context
def cmd_make_manifest(ctx, corpus, vocab, n_contexts, seed, output):
    """Sample context sentences per vocabulary word."""
    cfg = _config(ctx, corpus=corpus, vocab=vocab, n_contexts=n_contexts,
                  seed=seed, output=output)
    if not cfg.corpus or not cfg.vocab or not cfg.output:
        click.echo("error (config): make-manifest needs --corpus, --vocab, --output", err=True)
        sys.exit(2)
    data = _call(ctx, "POST", "/manifest/build", {
        "corpus_path": cfg.corpus, "vocab_path": cfg.vocab,
        "n_contexts": cfg.n_contexts, "seed": cfg.seed, "output_path": cfg.output})
    click.echo(f"{data['rows']} occurrences for {data['words']} words "
               f"-> {data['output_path']}")


@main.command("make-stub-batch")
@click.option("--corpus", type=click.Path())
@click.option("--manifest", type=click.Path())
@click.option("--dim", type=int, default=None)
@click.option("--layers", default=None, help='Layer set, e.g. "3..10" or "1,4,7".')
@click.option("--seed", type=int, default=None)
@click.option("--output", "-o", type=click.Path())
@click.pass_context
def cmd_make_stub_batch(ctx, corpus, manifest, dim, layers, seed, output):
    """Synthesize a deterministic fake embedding batch (testing/demo only)."""
    cfg = _config(ctx, corpus=corpus, manifest=manifest, dim=dim, layers=layers,
                  seed=seed, output=output)
    if not cfg.corpus or not cfg.manifest or not cfg.dim or not cfg.layers or not cfg.output:
        click.echo("error (config): make-stub-batch needs --corpus, --manifest, "
                   "--dim, --layers, --output", err=True)
        sys.exit(2)
    data = _call(ctx, "POST", "/batch/stub", {
        "corpus_path": cfg.corpus, "manifest_path": cfg.manifest, "dim": cfg.dim,
        "layers": list(cfg.layers), "seed": cfg.seed, "output_path": cfg.output})
    click.echo(f"{data['records']} records -> {data['output_path']}")


@main.command("build-index")
@click.option("--batch", "batches", multiple=True, type=click.Path(),
              help="Batch file (repeatable).")
@click.option("--k", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--output", "-o", type=click.Path())
@click.pass_context
def cmd_build_index(ctx, batches, k, seed, threads, output):
    """Cluster per-word occurrence embeddings into a sense index."""
    cfg = _config(ctx, k=k, seed=seed, threads=threads, output=output)
    if not batches or not cfg.output:
        click.echo("error (config): build-index needs --batch and --output", err=True)
        sys.exit(2)
    data = _call(ctx, "POST", "/index/build", {
        "batch_paths": list(batches), "k": cfg.k, "seed": cfg.seed,
        "threads": cfg.threads, "output_path": cfg.output})
    click.echo(f"indexed {data['words']} words (dim={data['dim']}, k={data['k']}) "
               f"-> {data['output_path']} ({data['bytes']} bytes)")


def _generation_payload(cfg: RunConfig, rerank: bool, heuristic: bool) -> dict:
    return {"lambda": cfg.lambda_, "threshold": cfg.threshold, "rerank_m": cfg.rerank_m,
            "top_n": cfg.top_n, "rerank": rerank, "heuristic": heuristic}


@main.command("substitute")
@click.option("--index", type=click.Path())
@click.option("--queries", type=click.Path(), help="Gold file or id/start/end/sentence TSV.")
@click.option("--provider", default=None, help='"stub:SEED", "tcp:HOST:PORT", "unix:PATH".')
@click.option("--layers", default=None)
@click.option("--dim", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--lambda", "lambda_", type=float, default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--rerank-m", type=int, default=None)
@click.option("--top-n", type=int, default=None)
@click.option("--no-rerank", is_flag=True, default=False)
@click.option("--no-heuristic", is_flag=True, default=False)
@click.option("--lemma", "lemma_path", type=click.Path(), default=None)
@click.option("--output", "-o", type=click.Path())
@click.pass_context
def cmd_substitute(ctx, index, queries, provider, layers, dim, seed, lambda_, threshold,
                   rerank_m, top_n, no_rerank, no_heuristic, lemma_path, output):
    """Generate ranked substitutes for every query."""
    cfg = _config(ctx, index=index, gold=queries, provider=provider, layers=layers,
                  dim=dim, seed=seed, lambda_=lambda_, threshold=threshold,
                  rerank_m=rerank_m, top_n=top_n, lemma_table=lemma_path, output=output)
    if not cfg.index or not cfg.gold or not cfg.provider:
        click.echo("error (config): substitute needs --index, --queries, --provider", err=True)
        sys.exit(2)
    data = _call(ctx, "POST", "/substitute", {
        "index_path": cfg.index, "queries_path": cfg.gold, "provider": cfg.provider,
        "layers": list(cfg.layers) if cfg.layers else None, "dim": cfg.dim,
        "seed": cfg.seed, "lemma_path": cfg.lemma_table, "output_path": cfg.output,
        "options": _generation_payload(cfg, not no_rerank, not no_heuristic)})
    where = f" -> {data['output_path']}" if data["output_path"] else ""
    click.echo(f"predicted substitutes for {data['instances']} instances{where}")
    if not data["output_path"]:
        for iid, scored in data["predictions"].items():
            for rank, item in enumerate(scored, 1):
                click.echo(f"{iid}\t{rank}\t{item['word']}\t{item['score']:.9f}")


@main.command("rank-candidates")
@click.option("--gold", type=click.Path())
@click.option("--provider", default=None)
@click.option("--layers", default=None)
@click.option("--dim", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--output", "-o", type=click.Path())
@click.pass_context
def cmd_rank_candidates(ctx, gold, provider, layers, dim, seed, output):
    """Rank each item's annotated candidate pool by in-context fit."""
    cfg = _config(ctx, gold=gold, provider=provider, layers=layers, dim=dim,
                  seed=seed, output=output)
    if not cfg.gold or not cfg.provider:
        click.echo("error (config): rank-candidates needs --gold and --provider", err=True)
        sys.exit(2)
    data = _call(ctx, "POST", "/rank", {
        "gold_path": cfg.gold, "provider": cfg.provider,
        "layers": list(cfg.layers) if cfg.layers else None, "dim": cfg.dim,
        "seed": cfg.seed, "output_path": cfg.output})
    where = f" -> {data['output_path']}" if data["output_path"] else ""
    click.echo(f"ranked candidates for {data['instances']} instances "
               f"({data['skipped']} skipped){where}")


@main.command("evaluate")
@click.option("--gold", type=click.Path())
@click.option("--predictions", type=click.Path())
@click.option("--lemma", "lemma_path", type=click.Path(), default=None)
@click.option("--lenient/--strict", "lenient", default=None,
              help="Restrict to one setting (default: report both).")
@click.option("--micro", is_flag=True, default=False)
@click.option("--top-n", type=int, default=None)
@click.option("--gold-format", type=click.Choice(["auto", "native", "semeval"]),
              default="auto")
@click.option("--append-unscored-seed", type=int, default=None)
@click.option("--output", "-o", type=click.Path(), default=None)
@click.pass_context
def cmd_evaluate(ctx, gold, predictions, lemma_path, lenient, micro, top_n,
                 gold_format, append_unscored_seed, output):
    """Score predictions against gold (F, GAP, best/oot). Offline: no provider."""
    cfg = _config(ctx, gold=gold, predictions=predictions, lemma_table=lemma_path,
                  top_n=top_n, output=output)
    if not cfg.gold or not cfg.predictions:
        click.echo("error (config): evaluate needs --gold and --predictions", err=True)
        sys.exit(2)
    settings = ["strict", "lenient"] if lenient is None else (
        ["lenient"] if lenient else ["strict"])
    data = _call(ctx, "POST", "/evaluate", {
        "gold_path": cfg.gold, "predictions_path": cfg.predictions,
        "lemma_path": cfg.lemma_table, "settings": settings, "micro": micro,
        "gold_format": gold_format, "top_n": cfg.top_n,
        "append_unscored_seed": append_unscored_seed, "output_path": cfg.output})
    for row in data["rows"]:
        click.echo(f"{row['metric']}\t{row['setting']}\t{row['value']:.6f}")


@main.command("analyze")
@click.option("--gold", type=click.Path())
@click.option("--predictions", type=click.Path(), default=None)
@click.option("--lexicon", type=click.Path(), default=None)
@click.option("--freq-table", type=click.Path(), default=None)
@click.option("--lemma", "lemma_path", type=click.Path(), default=None)
@click.option("--top-n", type=int, default=None)
@click.option("--sweep-index", "sweep_indexes", multiple=True,
              help="LAYER=INDEX_PATH (repeatable) for the layer sweep.")
@click.option("--sweep-combined", type=click.Path(), default=None)
@click.option("--sweep-metric", default="F_c")
@click.option("--sweep-setting", type=click.Choice(["strict", "lenient"]), default="strict")
@click.option("--provider", default=None)
@click.option("--layers", default=None)
@click.option("--dim", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--output", "-o", type=click.Path(), default=None)
@click.pass_context
def cmd_analyze(ctx, gold, predictions, lexicon, freq_table, lemma_path, top_n,
                sweep_indexes, sweep_combined, sweep_metric, sweep_setting,
                provider, layers, dim, seed, output):
    """Bias and frequency analyses; optional per-layer performance sweep."""
    cfg = _config(ctx, gold=gold, predictions=predictions, lexicon=lexicon,
                  freq_table=freq_table, lemma_table=lemma_path, top_n=top_n,
                  provider=provider, layers=layers, dim=dim, seed=seed, output=output)
    if not cfg.gold:
        click.echo("error (config): analyze needs --gold", err=True)
        sys.exit(2)
    sweep = None
    if sweep_indexes:
        layer_map = {}
        for spec_str in sweep_indexes:
            layer_s, sep, path = spec_str.partition("=")
            if not sep or not layer_s.isdigit():
                click.echo(f"error (config): bad --sweep-index {spec_str!r}, "
                           "expected LAYER=PATH", err=True)
                sys.exit(2)
            layer_map[int(layer_s)] = path
        sweep = {"layer_indexes": layer_map, "combined_path": sweep_combined,
                 "metric": sweep_metric, "setting": sweep_setting}
    data = _call(ctx, "POST", "/analyze", {
        "gold_path": cfg.gold, "predictions_path": cfg.predictions,
        "lexicon_path": cfg.lexicon, "freq_table_path": cfg.freq_table,
        "lemma_path": cfg.lemma_table, "provider": cfg.provider,
        "layers": list(cfg.layers) if cfg.layers else None, "dim": cfg.dim,
        "seed": cfg.seed, "top_n": cfg.top_n, "sweep": sweep,
        "output_path": cfg.output})
    for row in data["rows"]:
        click.echo(f"{row['metric']}\t{row['setting']}\t{row['value']:.6f}")


@main.command("ablate")
@click.option("--index", type=click.Path())
@click.option("--queries", type=click.Path())
@click.option("--provider", default=None)
@click.option("--layers", default=None)
@click.option("--dim", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--lambda", "lambda_", type=float, default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--rerank-m", type=int, default=None)
@click.option("--top-n", type=int, default=None)
@click.option("--lemma", "lemma_path", type=click.Path(), default=None)
@click.option("--tag", "tags", multiple=True,
              help="Subset of: lambda0 lambda1 k1 random-cluster no-heuristic no-rerank.")
@click.option("--no-rerank", is_flag=True, default=False,
              help="Run the whole grid without reranking.")
@click.option("--no-heuristic", is_flag=True, default=False)
@click.option("--output-dir", type=click.Path(), required=True)
@click.pass_context
def cmd_ablate(ctx, index, queries, provider, layers, dim, seed, lambda_, threshold,
               rerank_m, top_n, lemma_path, tags, no_rerank, no_heuristic, output_dir):
    """One prediction file per ablation configuration."""
    cfg = _config(ctx, index=index, gold=queries, provider=provider, layers=layers,
                  dim=dim, seed=seed, lambda_=lambda_, threshold=threshold,
                  rerank_m=rerank_m, top_n=top_n, lemma_table=lemma_path)
    if not cfg.index or not cfg.gold or not cfg.provider:
        click.echo("error (config): ablate needs --index, --queries, --provider", err=True)
        sys.exit(2)
    data = _call(ctx, "POST", "/ablate", {
        "index_path": cfg.index, "queries_path": cfg.gold, "provider": cfg.provider,
        "layers": list(cfg.layers) if cfg.layers else None, "dim": cfg.dim,
        "seed": cfg.seed, "lemma_path": cfg.lemma_table, "output_dir": output_dir,
        "tags": list(tags) or None,
        "options": _generation_payload(cfg, not no_rerank, not no_heuristic)})
    for tag, path in data["files"].items():
        click.echo(f"{tag}\t{path}")


@main.command("index-info")
@click.option("--index", type=click.Path(), required=True)
@click.pass_context
def cmd_index_info(ctx, index):
    """Header stats of an index file."""
    data = _call(ctx, "GET", "/index/info", params={"path": index})
    click.echo(f"{data['path']}: {data['words']} words, dim={data['dim']}, k={data['k']}")


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8640)
def cmd_serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
