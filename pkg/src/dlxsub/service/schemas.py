"""Request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorBody(BaseModel):
    kind: str
    message: str


class VocabBuildRequest(BaseModel):
    corpus_path: str
    size: int = 30_000
    output_path: str


class VocabBuildResponse(BaseModel):
    kept: int
    requested: int
    complete: bool
    distinct_tokens: int
    output_path: str


class ManifestRequest(BaseModel):
    corpus_path: str
    vocab_path: str
    n_contexts: int = 300
    seed: int = 0
    output_path: str


class ManifestResponse(BaseModel):
    words: int
    rows: int
    skipped: int
    output_path: str


class StubBatchRequest(BaseModel):
    corpus_path: str
    manifest_path: str
    dim: int
    layers: list[int]
    seed: int = 0
    output_path: str


class StubBatchResponse(BaseModel):
    records: int
    dim: int
    layers: list[int]
    output_path: str


class IndexBuildRequest(BaseModel):
    batch_paths: list[str]
    k: int = 4
    seed: int = 0
    threads: int = 1
    output_path: str


class IndexBuildResponse(BaseModel):
    words: int
    dim: int
    k: int
    layers: list[int]
    output_path: str
    bytes: int


class IndexInfoResponse(BaseModel):
    path: str
    words: int
    dim: int
    k: int


class GenerationOptions(BaseModel):
    lambda_: float = Field(default=0.7, alias="lambda", ge=0.0, le=1.0)
    threshold: float = Field(default=0.5, ge=0.0, le=1.0)
    rerank_m: int = Field(default=50, ge=1)
    top_n: int = Field(default=10, ge=1)
    rerank: bool = True
    heuristic: bool = True

    model_config = {"populate_by_name": True}


class SubstituteRequest(BaseModel):
    index_path: str
    queries_path: str
    provider: str
    layers: list[int] | None = None
    dim: int | None = None
    seed: int = 0
    lemma_path: str | None = None
    output_path: str | None = None
    options: GenerationOptions = GenerationOptions()


class ScoredWord(BaseModel):
    word: str
    score: float


class PredictionsResponse(BaseModel):
    instances: int
    output_path: str | None
    predictions: dict[str, list[ScoredWord]]


class RankRequest(BaseModel):
    gold_path: str
    provider: str
    layers: list[int] | None = None
    dim: int | None = None
    seed: int = 0
    output_path: str | None = None


class RankResponse(PredictionsResponse):
    skipped: int


class EvaluateRequest(BaseModel):
    gold_path: str
    predictions_path: str
    lemma_path: str | None = None
    settings: list[str] = ["strict", "lenient"]
    micro: bool = False
    gold_format: str = "auto"
    top_n: int = 10
    append_unscored_seed: int | None = None
    output_path: str | None = None


class ReportRowModel(BaseModel):
    metric: str
    setting: str
    value: float


class ReportResponse(BaseModel):
    rows: list[ReportRowModel]
    output_path: str | None


class SweepOptions(BaseModel):
    layer_indexes: dict[int, str]
    combined_path: str | None = None
    metric: str = "F_c"
    setting: str = "strict"


class AnalyzeRequest(BaseModel):
    gold_path: str
    predictions_path: str | None = None
    lexicon_path: str | None = None
    freq_table_path: str | None = None
    lemma_path: str | None = None
    provider: str | None = None
    layers: list[int] | None = None
    dim: int | None = None
    seed: int = 0
    top_n: int = 10
    sweep: SweepOptions | None = None
    output_path: str | None = None


class AblateRequest(BaseModel):
    index_path: str
    queries_path: str
    provider: str
    layers: list[int] | None = None
    dim: int | None = None
    seed: int = 0
    lemma_path: str | None = None
    output_dir: str
    tags: list[str] | None = None
    options: GenerationOptions = GenerationOptions()


class AblateResponse(BaseModel):
    files: dict[str, str]
