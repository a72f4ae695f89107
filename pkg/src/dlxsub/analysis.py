"""Diagnostic analyses: article-agreement bias, frequency buckets, layer sweeps.

Article agreement measures how often predicted substitutes satisfy the
phonetic (a/an) or grammatical-gender (Italian articles) constraint of
the article preceding the target; lexicon-unknown words are excluded
from both sides of the fraction and the usable count is reported.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError, DataError

VOWEL = "vowel-initial"
CONSONANT = "consonant-initial"
MASCULINE = "masculine"
FEMININE = "feminine"

PHONETIC_ARTICLES = {"a": CONSONANT, "an": VOWEL}
GENDER_ARTICLES = {"un": MASCULINE, "il": MASCULINE, "i": MASCULINE,
                   "una": FEMININE, "la": FEMININE, "le": FEMININE}

_MODES = {
    "phonetic": {VOWEL, CONSONANT},
    "gender": {MASCULINE, FEMININE},
}


@dataclass
class AgreementLexicon:
    classes: dict[str, str]
    mode: str  # "phonetic" or "gender"

    @classmethod
    def from_mapping(cls, classes: dict[str, str]) -> "AgreementLexicon":
        values = set(classes.values())
        for mode, allowed in _MODES.items():
            if values <= allowed:
                return cls(classes=dict(classes), mode=mode)
        raise DataError(f"lexicon mixes agreement classes: {sorted(values)}")

    @classmethod
    def load(cls, path) -> "AgreementLexicon":
        from .errors import ParseError

        classes = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError("expected word<TAB>class", path=str(path), line=lineno)
                classes[parts[0]] = parts[1]
        return cls.from_mapping(classes)

    def required_class(self, article: str) -> str:
        table = PHONETIC_ARTICLES if self.mode == "phonetic" else GENDER_ARTICLES
        if article not in table:
            raise ContractError(f"article {article!r} not valid for {self.mode} lexicon")
        return table[article]


def agreement_counts(words, article: str, lexicon: AgreementLexicon,
                     top_n: int = 10) -> tuple[int, int]:
    """(agreeing, lexicon-known) counts over the top-n words."""
    required = lexicon.required_class(article)
    agree = known = 0
    for word in list(words)[:top_n]:
        cls = lexicon.classes.get(word)
        if cls is None:
            continue
        known += 1
        if cls == required:
            agree += 1
    return agree, known


def article_agreement(words, article: str, lexicon: AgreementLexicon,
                      top_n: int = 10) -> float | None:
    """Fraction of known top-n words agreeing with the article; None if none known."""
    agree, known = agreement_counts(words, article, lexicon, top_n)
    return agree / known if known else None


@dataclass(frozen=True)
class FrequencyTable:
    counts: dict[str, int]
    low_edge: int = 50_000
    high_edge: int = 100_000

    def __post_init__(self):
        if self.low_edge >= self.high_edge:
            raise ContractError("bucket edges must be strictly increasing")
        if any(c < 0 for c in self.counts.values()):
            raise ContractError("frequency counts must be non-negative")

    @classmethod
    def load(cls, path, low_edge: int = 50_000, high_edge: int = 100_000) -> "FrequencyTable":
        from .errors import ParseError

        counts = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError("expected word<TAB>count", path=str(path), line=lineno)
                try:
                    counts[parts[0]] = int(parts[1])
                except ValueError:
                    raise ParseError(f"bad count {parts[1]!r}", path=str(path), line=lineno)
        return cls(counts=counts, low_edge=low_edge, high_edge=high_edge)


@dataclass(frozen=True)
class BucketCounts:
    low: int = 0
    med: int = 0
    high: int = 0
    unknown: int = 0


def freq_buckets(words, table: FrequencyTable) -> BucketCounts:
    """Bin words by corpus frequency: [0, low), [low, high], (high, inf)."""
    low = med = high = unknown = 0
    for word in words:
        count = table.counts.get(word)
        if count is None:
            unknown += 1
        elif count < table.low_edge:
            low += 1
        elif count <= table.high_edge:
            med += 1
        else:
            high += 1
    return BucketCounts(low=low, med=med, high=high, unknown=unknown)


def layer_sweep(per_layer_indexes: dict[int, object], evaluate,
                combined_index: object | None = None) -> list[tuple[str, float]]:
    """Metric series over single-layer indexes plus the combined-layer row.

    `evaluate(index, layers)` runs the pipeline and returns the metric;
    `layers` is the single-layer tuple or None for the combined index.
    """
    series: list[tuple[str, float]] = []
    for layer in sorted(per_layer_indexes):
        series.append((f"layer:{layer}", evaluate(per_layer_indexes[layer], (layer,))))
    if combined_index is not None:
        series.append(("combined", evaluate(combined_index, None)))
    return series
