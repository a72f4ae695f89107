import pytest

from dlxsub.errors import ContractError, NotFoundError
from dlxsub.vocab import (build_vocab, is_lexical, occurrence_index, read_manifest,
                          read_sentences, read_vocab, sample_contexts, token_counts,
                          write_manifest, write_vocab)


class TestFilter:
    @pytest.mark.parametrize("token,ok", [
        ("the", True),
        ("perché", True),          # accented lowercase survives
        ("Cat", False),            # capital
        ("dog2", False),           # numeral
        ("out!", False),           # punctuation
        ("co-op", False),          # hyphen is punctuation
        ("", False),
        ("ß", True),
        ("È", False),              # capital with accent
    ])
    def test_rule(self, token, ok):
        assert is_lexical(token) is ok


class TestBuildVocab:
    def test_filter_and_sort(self):
        build = build_vocab({"the": 5, "Cat": 3, "dog2": 2, "run": 1}, size=3)
        assert [e.word for e in build.entries] == ["the", "run"]
        assert not build.complete  # only 2 survivors for size 3

    def test_singleton(self):
        build = build_vocab({"a": 1}, size=1)
        assert [e.word for e in build.entries] == ["a"]
        assert build.complete

    def test_tie_break_lexicographic(self):
        build = build_vocab({"y": 2, "x": 2}, size=1)
        assert [e.word for e in build.entries] == ["x"]

    def test_sorted_count_desc_word_asc(self):
        counts = {"b": 3, "a": 3, "c": 9, "d": 1}
        entries = build_vocab(counts, size=4).entries
        keys = [(-e.corpus_frequency, e.word) for e in entries]
        assert keys == sorted(keys)

    def test_refilter_fixed_point(self):
        counts = {"ok": 4, "Bad": 2, "fine": 1, "x9": 7}
        entries = build_vocab(counts, size=10).entries
        assert all(is_lexical(e.word) for e in entries)

    def test_bad_size(self):
        with pytest.raises(ContractError):
            build_vocab({"a": 1}, size=0)


class TestOccurrenceIndex:
    def test_first_span_per_sentence(self):
        occ = occurrence_index(["the cat saw the cat"])
        assert occ["cat"] == [(0, 4, 7)]
        assert occ["the"] == [(0, 0, 3)]

    def test_byte_offsets_multibyte(self):
        occ = occurrence_index(["perché è lì"])
        # "perché" encodes to 7 bytes
        assert occ["perché"] == [(0, 0, 7)]
        assert occ["è"] == [(0, 8, 10)]

    def test_word_restriction(self):
        occ = occurrence_index(["a b c"], words={"b"})
        assert set(occ) == {"b"}


class TestSampleContexts:
    def _index(self, n_sentences):
        return occurrence_index([f"filler {i} word here" for i in range(n_sentences)])

    def test_exhausts_small_population(self):
        occ = self._index(2)
        manifest = sample_contexts("word", occ, n=300, seed=1)
        assert len(manifest.occurrences) == 2
        assert manifest.requested_n == 300

    def test_deterministic(self):
        occ = self._index(50)
        a = sample_contexts("word", occ, n=10, seed=9)
        b = sample_contexts("word", occ, n=10, seed=9)
        assert a == b

    def test_seed_changes_sample(self):
        occ = self._index(200)
        a = sample_contexts("word", occ, n=10, seed=1)
        b = sample_contexts("word", occ, n=10, seed=2)
        assert a != b

    def test_exact_count_and_uniqueness(self):
        occ = occurrence_index([f"word in sentence {i}" for i in range(1000)])
        manifest = sample_contexts("word", occ, n=300, seed=4)
        sids = [sid for sid, _, _ in manifest.occurrences]
        assert len(sids) == 300
        assert len(set(sids)) == 300

    def test_absent_word(self):
        with pytest.raises(NotFoundError):
            sample_contexts("ghost", self._index(3), n=5, seed=0)


class TestFileRoundTrips:
    def test_vocab_tsv(self, tmp_path):
        build = build_vocab({"b": 2, "a": 5}, size=2)
        path = tmp_path / "vocab.tsv"
        write_vocab(build, path)
        entries = read_vocab(path)
        assert entries == build.entries

    def test_manifest_tsv(self, tmp_path):
        occ = occurrence_index(["word one", "word two", "word three"])
        manifest = sample_contexts("word", occ, n=2, seed=3)
        path = tmp_path / "manifest.tsv"
        write_manifest([manifest], path)
        rows = read_manifest(path)
        assert [(r.word, r.sentence_id, r.start, r.end) for r in rows] == [
            ("word", sid, start, end) for sid, start, end in manifest.occurrences]

    def test_corpus_fixture(self, fixtures_dir):
        sentences = read_sentences(fixtures_dir / "corpus_en.txt")
        counts = token_counts(sentences)
        assert counts["the"] > counts["cat"] > 0
        build = build_vocab(counts, size=30)
        words = {e.word for e in build.entries}
        assert "pay" in words and "payer" in words
        assert "Numbers" not in words and "42" not in words
