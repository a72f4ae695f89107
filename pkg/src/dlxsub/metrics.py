"""Gold-data parsing and the lexical-substitution metric suite.

Metrics: F1 against acceptable/conceivable gold sets in strict and
lenient modes, Generalized Average Precision for ranking, and the
classic best/oot scores. Corpus-level F is macro-averaged by default;
micro-averaging is available for comparison. Lemma folding merges gold
weights by max so annotator votes are never double-counted.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ContractError, ParseError
from .seeds import derive_seed

ACCEPTABLE = "acceptable"
CONCEIVABLE = "conceivable"
UNSCORED = "unscored"

ACCEPTABLE_MIN_WEIGHT = 6  # judged good by more than five of ten annotators

GOLD_HEADER = "#dlx-gold v1"


def label_for_weight(weight: int) -> str:
    if weight >= ACCEPTABLE_MIN_WEIGHT:
        return ACCEPTABLE
    if weight >= 1:
        return CONCEIVABLE
    return UNSCORED


@dataclass(frozen=True)
class GoldSubstitute:
    word: str
    weight: int
    label: str


@dataclass
class GoldItem:
    instance_id: str
    sentence: str
    start: int
    end: int
    substitutes: list[GoldSubstitute]
    candidate_pool: set[str]
    target_word: str = ""

    def weights(self, level: str = CONCEIVABLE) -> dict[str, int]:
        """Positive gold weights at a label level (acceptable is the stricter cut)."""
        minimum = ACCEPTABLE_MIN_WEIGHT if level == ACCEPTABLE else 1
        return {s.word: s.weight for s in self.substitutes if s.weight >= minimum}


class LemmaTable:
    """Surface form -> lemma map with identity fallback."""

    def __init__(self, mapping=None):
        self._map = dict(mapping or {})

    def fold(self, word: str) -> str:
        return self._map.get(word, word)

    def __len__(self) -> int:
        return len(self._map)

    @classmethod
    def load(cls, path) -> "LemmaTable":
        mapping = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError("expected surface<TAB>lemma", path=str(path), line=lineno)
                mapping[parts[0]] = parts[1]
        return cls(mapping)


IDENTITY = LemmaTable()


@dataclass(frozen=True)
class RankedPrediction:
    instance_id: str
    words: tuple[str, ...]


# ---------------------------------------------------------------------------
# parsers

def parse_gold_native(path) -> list[GoldItem]:
    """Engine-native gold file: see the format notes in the README.

    Layout: header line, then per item an `ID<TAB>start<TAB>end<TAB>sentence`
    line followed by indented `<TAB>word<TAB>weight` substitute lines and
    optional `*word` pool lines (scored candidates with zero votes).
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != GOLD_HEADER:
        raise ParseError(f"missing {GOLD_HEADER!r} header", path=str(path), line=1)
    items: list[GoldItem] = []
    current: GoldItem | None = None
    seen_ids: set[str] = set()
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip() or line.startswith("#"):
            continue
        if line.startswith("\t"):
            if current is None:
                raise ParseError("substitute line before any item", path=str(path), line=lineno)
            parts = line[1:].split("\t")
            if len(parts) != 2:
                raise ParseError("expected <TAB>word<TAB>weight", path=str(path), line=lineno)
            word = parts[0]
            try:
                weight = int(parts[1])
            except ValueError:
                raise ParseError(f"bad weight {parts[1]!r}", path=str(path), line=lineno)
            if not word or weight < 0:
                raise ParseError("substitute needs a word and weight >= 0",
                                 path=str(path), line=lineno)
            current.substitutes.append(GoldSubstitute(word, weight, label_for_weight(weight)))
            current.candidate_pool.add(word)
            continue
        if line.startswith("*"):
            if current is None:
                raise ParseError("pool line before any item", path=str(path), line=lineno)
            word = line[1:].strip()
            if not word:
                raise ParseError("empty pool word", path=str(path), line=lineno)
            if word not in current.candidate_pool:
                current.substitutes.append(GoldSubstitute(word, 0, UNSCORED))
                current.candidate_pool.add(word)
            continue
        parts = line.split("\t", 3)
        if len(parts) != 4:
            raise ParseError("expected ID<TAB>start<TAB>end<TAB>sentence",
                             path=str(path), line=lineno)
        instance_id, start_s, end_s, sentence = parts
        if instance_id in seen_ids:
            raise ParseError(f"duplicate instance id {instance_id!r}",
                             path=str(path), line=lineno)
        seen_ids.add(instance_id)
        try:
            start, end = int(start_s), int(end_s)
        except ValueError:
            raise ParseError("non-integer span", path=str(path), line=lineno)
        raw = sentence.encode("utf-8")
        if not (0 <= start < end <= len(raw)):
            raise ParseError(f"span [{start}, {end}) out of range", path=str(path), line=lineno)
        try:
            target = raw[start:end].decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("span splits a multi-byte character", path=str(path), line=lineno)
        current = GoldItem(instance_id=instance_id, sentence=sentence, start=start, end=end,
                           substitutes=[], candidate_pool=set(), target_word=target.lower())
        items.append(current)
    return items


_SEMEVAL_LINE = re.compile(r"^(?P<head>[^:]+?)\s*::\s*(?P<subs>.*)$")


def parse_semeval(path) -> list[GoldItem]:
    """`word.pos id :: sub weight; sub weight;` gold lines.

    Multiword substitutes are dropped. Items keep an empty sentence; only
    ranking metrics consume them.
    """
    items: list[GoldItem] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            m = _SEMEVAL_LINE.match(line)
            if not m:
                raise ParseError("expected `word.pos id :: sub weight; ...`",
                                 path=str(path), line=lineno)
            head = m.group("head").split()
            if len(head) != 2:
                raise ParseError(f"bad item head {m.group('head')!r}",
                                 path=str(path), line=lineno)
            lemma_pos, instance_id = head
            if instance_id in seen_ids:
                raise ParseError(f"duplicate instance id {instance_id!r}",
                                 path=str(path), line=lineno)
            seen_ids.add(instance_id)
            target = lemma_pos.rsplit(".", 1)[0]
            substitutes = []
            pool: set[str] = set()
            for chunk in m.group("subs").split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                word, _, weight_s = chunk.rpartition(" ")
                word = word.strip()
                if not word:
                    raise ParseError(f"substitute entry {chunk!r} has no weight",
                                     path=str(path), line=lineno)
                try:
                    weight = int(weight_s)
                except ValueError:
                    raise ParseError(f"bad weight {weight_s!r}", path=str(path), line=lineno)
                if " " in word:
                    continue  # multiword expressions are ignored
                substitutes.append(GoldSubstitute(word, weight, label_for_weight(weight)))
                pool.add(word)
            items.append(GoldItem(instance_id=instance_id, sentence="", start=0, end=0,
                                  substitutes=substitutes, candidate_pool=pool,
                                  target_word=target))
    return items


def read_predictions(path) -> dict[str, list[str]]:
    """Prediction TSV `instance_id<TAB>rank<TAB>word<TAB>score` -> ranked words."""
    rows: dict[str, list[tuple[int, str]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError("expected instance_id<TAB>rank<TAB>word<TAB>score",
                                 path=str(path), line=lineno)
            try:
                rank = int(parts[1])
            except ValueError:
                raise ParseError(f"bad rank {parts[1]!r}", path=str(path), line=lineno)
            rows.setdefault(parts[0], []).append((rank, parts[2]))
    return {iid: [w for _, w in sorted(pairs)] for iid, pairs in rows.items()}


def write_predictions(predictions: dict[str, list[tuple[str, float]]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for iid, scored in predictions.items():
            for rank, (word, score) in enumerate(scored, 1):
                fh.write(f"{iid}\t{rank}\t{word}\t{score:.9f}\n")


# ---------------------------------------------------------------------------
# folding

def fold_top_n(raw_words, lemma_table: LemmaTable, pool: set[str] | None = None,
               n: int = 10) -> list[str]:
    """Pool-filter (lenient), then lemma-fold, dedupe keeping first, truncate."""
    words = [w for w in raw_words if pool is None or w in pool]
    out: list[str] = []
    seen: set[str] = set()
    for w in words:
        folded = lemma_table.fold(w)
        if folded in seen:
            continue
        seen.add(folded)
        out.append(folded)
        if len(out) == n:
            break
    return out


def fold_weights(weights: dict[str, int], lemma_table: LemmaTable) -> dict[str, int]:
    """Lemma-fold gold weights, merging collisions by max."""
    folded: dict[str, int] = {}
    for word, weight in weights.items():
        key = lemma_table.fold(word)
        folded[key] = max(folded.get(key, 0), weight)
    return folded


# ---------------------------------------------------------------------------
# metrics

def f_score(pred_words, gold_set) -> float:
    """Harmonic mean of precision and recall of the prediction set."""
    if not gold_set:
        raise ContractError("f_score needs a non-empty gold set")
    if not pred_words:
        return 0.0
    hits = len(set(pred_words) & set(gold_set))
    if hits == 0:
        return 0.0
    p = hits / len(pred_words)
    r = hits / len(gold_set)
    return 2 * p * r / (p + r)


def gap(pred_ranked, gold_weights: dict[str, int]) -> float:
    """Generalized Average Precision of a ranked prediction list.

    Every prediction occupies a rank; non-gold words contribute weight 0.
    The denominator is the score of the ideal ranking (gold words in
    non-increasing weight order).
    """
    if not gold_weights:
        raise ContractError("gap needs non-empty gold weights")
    if any(w <= 0 for w in gold_weights.values()):
        raise ContractError("gold weights must be positive")
    if not pred_ranked:
        return 0.0
    numerator = 0.0
    cumulative = 0
    for i, word in enumerate(pred_ranked, 1):
        weight = gold_weights.get(word, 0)
        cumulative += weight
        if weight > 0:
            numerator += cumulative / i
    denominator = 0.0
    running = 0
    for i, weight in enumerate(sorted(gold_weights.values(), reverse=True), 1):
        running += weight
        denominator += running / i
    return numerator / denominator


def best_oot(pred_ranked, gold_weights: dict[str, int]) -> tuple[float, float]:
    """Credit for the top-1 guess and for the top-10 set, against weighted gold."""
    if not gold_weights:
        raise ContractError("best_oot needs non-empty gold weights")
    total = sum(gold_weights.values())
    if not pred_ranked:
        return 0.0, 0.0
    best = gold_weights.get(pred_ranked[0], 0) / total
    oot = sum(gold_weights.get(w, 0) for w in dict.fromkeys(pred_ranked[:10])) / total
    return best, oot


def append_unscored(pred_ranked, pool, seed: int, instance_id: str = "") -> list[str]:
    """Extend predictions with missing pool words in seeded random order."""
    missing = sorted(set(pool) - set(pred_ranked))
    rng = random.Random(derive_seed(seed, "unscored-append", instance_id))
    rng.shuffle(missing)
    return list(pred_ranked) + missing


# ---------------------------------------------------------------------------
# corpus-level evaluation

@dataclass
class ReportRow:
    metric: str
    setting: str
    value: float

    def line(self) -> str:
        return f"{self.metric}\t{self.setting}\t{self.value:.6f}"


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def evaluate_generation(gold_items, predictions: dict[str, list[str]],
                        lemma_table: LemmaTable = IDENTITY, top_n: int = 10,
                        settings=("strict", "lenient"), micro: bool = False) -> list[ReportRow]:
    """F against acceptable and conceivable gold, per evaluation setting."""
    rows = []
    for level, metric in ((ACCEPTABLE, "F_a"), (CONCEIVABLE, "F_c")):
        for setting in settings:
            per_item = []
            agg_hits = agg_pred = agg_gold = 0
            for item in gold_items:
                gold = set(fold_weights(item.weights(level), lemma_table))
                if not gold:
                    continue
                raw = predictions.get(item.instance_id, [])
                pool = item.candidate_pool if setting == "lenient" else None
                pred = fold_top_n(raw, lemma_table, pool=pool, n=top_n)
                if micro:
                    agg_hits += len(set(pred) & gold)
                    agg_pred += len(pred)
                    agg_gold += len(gold)
                else:
                    per_item.append(f_score(pred, gold) if pred else 0.0)
            if micro:
                p = agg_hits / agg_pred if agg_pred else 0.0
                r = agg_hits / agg_gold if agg_gold else 0.0
                value = 2 * p * r / (p + r) if p + r > 0 else 0.0
            else:
                value = _mean(per_item)
            rows.append(ReportRow(metric, setting, value))
    return rows


def evaluate_ranking(gold_items, predictions: dict[str, list[str]],
                     lemma_table: LemmaTable = IDENTITY,
                     append_unscored_seed: int | None = None) -> list[ReportRow]:
    """Mean GAP over items with gold substitutes."""
    scores = []
    for item in gold_items:
        weights = fold_weights(item.weights(CONCEIVABLE), lemma_table)
        if not weights:
            continue
        raw = predictions.get(item.instance_id, [])
        pred = fold_top_n(raw, lemma_table, n=len(raw) or 1)
        if append_unscored_seed is not None:
            pool = {lemma_table.fold(w) for w in item.candidate_pool}
            pred = append_unscored(pred, pool, append_unscored_seed, item.instance_id)
        scores.append(gap(pred, weights))
    setting = "-" if append_unscored_seed is None else "unscored-appended"
    return [ReportRow("GAP", setting, _mean(scores))]


def evaluate_best_oot(gold_items, predictions: dict[str, list[str]],
                      lemma_table: LemmaTable = IDENTITY) -> list[ReportRow]:
    """Mean best/oot precision over items that have predictions."""
    best_scores = []
    oot_scores = []
    for item in gold_items:
        weights = fold_weights(item.weights(CONCEIVABLE), lemma_table)
        if not weights:
            continue
        raw = predictions.get(item.instance_id)
        if not raw:
            continue
        pred = fold_top_n(raw, lemma_table, n=len(raw))
        b, o = best_oot(pred, weights)
        best_scores.append(b)
        oot_scores.append(o)
    return [ReportRow("best", "-", _mean(best_scores)),
            ReportRow("oot", "-", _mean(oot_scores))]


def write_report(rows: list[ReportRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(row.line() + "\n")
