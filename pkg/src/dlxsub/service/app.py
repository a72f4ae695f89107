"""HTTP service wrapping the engine pipelines.

One process loads indexes once (mtime-checked cache) and serves build,
substitution, ranking, evaluation, and analysis requests. Paths in
requests are resolved on the service host; the bundled CLI talks to this
app in-process by default, so paths are then simply local.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipelines
from ..config import RunConfig
from ..errors import ConfigError, DataError, EngineError, ProviderError
from . import schemas

_STATUS = {ConfigError.kind: 422, DataError.kind: 400, ProviderError.kind: 502}


def create_app() -> FastAPI:
    app = FastAPI(title="dlxsub", version=__version__)
    cache = pipelines.IndexCache()

    @app.exception_handler(EngineError)
    async def engine_error(_request: Request, exc: EngineError):
        return JSONResponse(
            status_code=_STATUS.get(exc.kind, 500),
            content={"error": {"kind": exc.kind, "message": str(exc)}},
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/vocab/build", response_model=schemas.VocabBuildResponse)
    def vocab_build(req: schemas.VocabBuildRequest):
        return pipelines.run_build_vocab(req.corpus_path, req.size, req.output_path)

    @app.post("/manifest/build", response_model=schemas.ManifestResponse)
    def manifest_build(req: schemas.ManifestRequest):
        return pipelines.run_make_manifest(req.corpus_path, req.vocab_path,
                                           req.n_contexts, req.seed, req.output_path)

    @app.post("/batch/stub", response_model=schemas.StubBatchResponse)
    def batch_stub(req: schemas.StubBatchRequest):
        return pipelines.run_stub_batch(req.corpus_path, req.manifest_path, req.dim,
                                        tuple(req.layers), req.seed, req.output_path)

    @app.post("/index/build", response_model=schemas.IndexBuildResponse)
    def index_build(req: schemas.IndexBuildRequest):
        return pipelines.run_build_index(req.batch_paths, req.k, req.seed,
                                         req.output_path, threads=req.threads)

    @app.get("/index/info", response_model=schemas.IndexInfoResponse)
    def index_info(path: str):
        index = cache.get(path)
        return {"path": path, "words": len(index), "dim": index.dim, "k": index.k}

    def _cfg(req, **extra) -> RunConfig:
        layers = tuple(req.layers) if getattr(req, "layers", None) else None
        return RunConfig(
            provider=getattr(req, "provider", None),
            layers=layers,
            dim=getattr(req, "dim", None),
            seed=getattr(req, "seed", 0),
            lemma_table=getattr(req, "lemma_path", None),
            **extra,
        )

    def _gen_overrides(options: schemas.GenerationOptions) -> dict:
        return {
            "lambda_": options.lambda_,
            "heuristic_threshold": options.threshold,
            "rerank_m": options.rerank_m,
            "top_n": options.top_n,
            "rerank_enabled": options.rerank,
            "heuristic_enabled": options.heuristic,
        }

    @app.post("/substitute", response_model=schemas.PredictionsResponse)
    def substitute(req: schemas.SubstituteRequest):
        cfg = _cfg(req, index=req.index_path, gold=req.queries_path,
                   lambda_=req.options.lambda_, threshold=req.options.threshold,
                   rerank_m=req.options.rerank_m, top_n=req.options.top_n)
        return pipelines.run_substitute(cfg, index_cache=cache,
                                        gen_overrides=_gen_overrides(req.options),
                                        output_path=req.output_path)

    @app.post("/rank", response_model=schemas.RankResponse)
    def rank(req: schemas.RankRequest):
        cfg = _cfg(req, gold=req.gold_path)
        return pipelines.run_rank_candidates(cfg, output_path=req.output_path)

    @app.post("/evaluate", response_model=schemas.ReportResponse)
    def evaluate(req: schemas.EvaluateRequest):
        for setting in req.settings:
            if setting not in ("strict", "lenient"):
                raise ConfigError(f"unknown setting {setting!r}")
        cfg = RunConfig(gold=req.gold_path, predictions=req.predictions_path,
                        lemma_table=req.lemma_path, top_n=req.top_n)
        return pipelines.run_evaluate(cfg, settings=tuple(req.settings), micro=req.micro,
                                      gold_format=req.gold_format,
                                      append_unscored_seed=req.append_unscored_seed,
                                      top_n=req.top_n, output_path=req.output_path)

    @app.post("/analyze", response_model=schemas.ReportResponse)
    def analyze(req: schemas.AnalyzeRequest):
        cfg = _cfg(req, gold=req.gold_path, predictions=req.predictions_path,
                   lexicon=req.lexicon_path, freq_table=req.freq_table_path)
        sweep = req.sweep
        return pipelines.run_analyze(
            cfg, top_n=req.top_n, output_path=req.output_path,
            sweep_indexes=sweep.layer_indexes if sweep else None,
            sweep_combined=sweep.combined_path if sweep else None,
            sweep_metric=sweep.metric if sweep else "F_c",
            sweep_setting=sweep.setting if sweep else "strict")

    @app.post("/ablate", response_model=schemas.AblateResponse)
    def ablate(req: schemas.AblateRequest):
        cfg = _cfg(req, index=req.index_path, gold=req.queries_path,
                   lambda_=req.options.lambda_, threshold=req.options.threshold,
                   rerank_m=req.options.rerank_m, top_n=req.options.top_n)
        tags = tuple(req.tags) if req.tags else pipelines.ABLATION_TAGS
        return pipelines.run_ablate(cfg, req.output_dir, tags=tags,
                                    base_overrides=_gen_overrides(req.options))

    return app


app = create_app()
