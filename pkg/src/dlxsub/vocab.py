"""Substitute-vocabulary construction and context-sampling manifests.

The vocabulary keeps the most frequent corpus tokens that contain no
numerals, punctuation, or capital letters (Unicode categories N*, P*,
Lu, Lt, so the rule holds for Italian as well as English). Counting is
over raw whitespace tokens; capitalised forms are discarded, not folded.
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import ContractError, NotFoundError, ParseError
from .seeds import derive_seed

import random

_TOKEN_RE = re.compile(r"\S+")


def is_lexical(token: str) -> bool:
    """True when the token passes the vocabulary character filter."""
    if not token:
        return False
    for ch in token:
        cat = unicodedata.category(ch)
        if cat[0] in ("N", "P") or cat in ("Lu", "Lt"):
            return False
    return True


@dataclass(frozen=True)
class VocabEntry:
    word: str
    corpus_frequency: int


@dataclass(frozen=True)
class VocabBuild:
    entries: list[VocabEntry]
    complete: bool  # False when fewer tokens survived the filter than requested


def build_vocab(token_counts, size: int) -> VocabBuild:
    """Top `size` filter-surviving tokens by count desc, word asc."""
    if size < 1:
        raise ContractError(f"vocabulary size must be >= 1, got {size}")
    survivors = [(w, int(c)) for w, c in token_counts.items() if is_lexical(w)]
    survivors.sort(key=lambda wc: (-wc[1], wc[0]))
    picked = survivors[:size]
    return VocabBuild(
        entries=[VocabEntry(w, c) for w, c in picked],
        complete=len(survivors) >= size,
    )


def read_sentences(path) -> list[str]:
    """One sentence per line, UTF-8."""
    text = Path(path).read_text(encoding="utf-8")
    return text.splitlines()


def token_counts(sentences) -> Counter:
    counts: Counter = Counter()
    for sentence in sentences:
        counts.update(_TOKEN_RE.findall(sentence))
    return counts


def occurrence_index(sentences, words=None) -> dict[str, list[tuple[int, int, int]]]:
    """Byte span of each token's first occurrence per sentence.

    Spans are [start, end) offsets into the UTF-8 encoding of the
    sentence. One occurrence per sentence: the first span wins.
    `words` optionally restricts which tokens are indexed.
    """
    index: dict[str, list[tuple[int, int, int]]] = {}
    keep = set(words) if words is not None else None
    for sid, sentence in enumerate(sentences):
        seen: set[str] = set()
        byte_pos = 0
        char_pos = 0
        for m in _TOKEN_RE.finditer(sentence):
            byte_pos += len(sentence[char_pos : m.start()].encode("utf-8"))
            tok = m.group()
            tok_len = len(tok.encode("utf-8"))
            if tok not in seen:
                seen.add(tok)
                if keep is None or tok in keep:
                    index.setdefault(tok, []).append((sid, byte_pos, byte_pos + tok_len))
            byte_pos += tok_len
            char_pos = m.end()
    return index


@dataclass(frozen=True)
class ContextManifest:
    word: str
    occurrences: list[tuple[int, int, int]]  # (sentence_id, start, end)
    requested_n: int


def sample_contexts(word: str, occ_index, n: int, seed: int) -> ContextManifest:
    """Uniform sample without replacement of min(n, available) sentences.

    Deterministic for a fixed (word, seed): the per-word RNG is derived
    from both, so results do not depend on iteration order.
    """
    if n < 1:
        raise ContractError(f"sample size must be >= 1, got {n}")
    occurrences = occ_index.get(word)
    if not occurrences:
        raise NotFoundError(f"word {word!r} does not occur in the corpus")
    rng = random.Random(derive_seed(seed, "context-sample", word))
    chosen = rng.sample(occurrences, min(n, len(occurrences)))
    chosen.sort(key=lambda occ: occ[0])
    return ContextManifest(word=word, occurrences=chosen, requested_n=n)


def write_vocab(build: VocabBuild, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in build.entries:
            fh.write(f"{entry.word}\t{entry.corpus_frequency}\n")


def read_vocab(path) -> list[VocabEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError("expected word<TAB>count", path=str(path), line=lineno)
            try:
                count = int(parts[1])
            except ValueError:
                raise ParseError(f"bad count {parts[1]!r}", path=str(path), line=lineno)
            entries.append(VocabEntry(parts[0], count))
    return entries


def write_manifest(manifests, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for manifest in manifests:
            for sid, start, end in manifest.occurrences:
                fh.write(f"{manifest.word}\t{sid}\t{start}\t{end}\n")


@dataclass(frozen=True)
class ManifestRow:
    word: str
    sentence_id: int
    start: int
    end: int


def read_manifest(path) -> list[ManifestRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError("expected word<TAB>sentence_id<TAB>start<TAB>end",
                                 path=str(path), line=lineno)
            try:
                rows.append(ManifestRow(parts[0], int(parts[1]), int(parts[2]), int(parts[3])))
            except ValueError:
                raise ParseError("non-integer manifest field", path=str(path), line=lineno)
    return rows
