"""Run configuration: reference-default hyperparameters, flat key=value files.

Every command's randomness flows from the single `seed` through named
sub-seeds, so each stage is independently reproducible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError

_LAYER_RANGE = re.compile(r"^(\d+)\.\.(\d+)$")


def parse_layers(text: str) -> tuple[int, ...]:
    """Layer selections: "3..22" ranges or "1,5,9" lists."""
    text = text.strip()
    m = _LAYER_RANGE.match(text)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if lo > hi:
            raise ConfigError(f"empty layer range {text!r}")
        return tuple(range(lo, hi + 1))
    try:
        layers = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"cannot parse layers {text!r}")
    if not layers:
        raise ConfigError(f"cannot parse layers {text!r}")
    return layers


@dataclass(frozen=True)
class RunConfig:
    # paths
    corpus: str | None = None
    vocab: str | None = None
    manifest: str | None = None
    index: str | None = None
    gold: str | None = None
    predictions: str | None = None
    lemma_table: str | None = None
    lexicon: str | None = None
    freq_table: str | None = None
    output: str | None = None
    # hyperparameters (defaults match the engine's reference setup)
    n_contexts: int = 300
    k: int = 4
    lambda_: float = 0.7
    threshold: float = 0.5
    rerank_m: int = 50
    top_n: int = 10
    layers: tuple[int, ...] | None = None
    dim: int | None = None
    # runtime
    provider: str | None = None
    seed: int = 0
    threads: int = 1
    vocab_size: int = 30_000

    def __post_init__(self):
        if self.n_contexts < 1:
            raise ConfigError("n_contexts must be positive")
        if self.k < 1:
            raise ConfigError("k must be positive")
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lambda_}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.rerank_m < 1 or self.top_n < 1:
            raise ConfigError("rerank_m and top_n must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.vocab_size < 1:
            raise ConfigError("vocab_size must be positive")

    def with_overrides(self, **overrides) -> "RunConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **clean) if clean else self


_KEY_ALIASES = {"lambda": "lambda_"}
_INT_KEYS = {"n_contexts", "k", "rerank_m", "top_n", "dim", "seed", "threads", "vocab_size"}
_FLOAT_KEYS = {"lambda_", "threshold"}


def load_config(path) -> RunConfig:
    """Flat `key=value` file; `#` comments; unknown keys rejected."""
    known = {f.name for f in fields(RunConfig)}
    values: dict[str, object] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key = _KEY_ALIASES.get(key.strip(), key.strip())
        value = value.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            if key == "layers":
                values[key] = parse_layers(value)
            elif key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}")
    return RunConfig(**values)
