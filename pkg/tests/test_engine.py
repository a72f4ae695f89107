import numpy as np
import pytest

from conftest import random_index, raw_index
from dlxsub.engine import (GenerationConfig, ScoredCandidate, SubstitutionQuery,
                           generate, heuristic_filter, rerank, retrieve_target_cluster,
                           score_all, target_embedding)
from dlxsub.errors import ConfigError, ContractError, ProviderError
from dlxsub.index import SenseIndex, SenseIndexEntry
from dlxsub.provider import RequestFailure, StubProvider
from dlxsub.vectors import EmbeddingSpec, LayeredEmbedding, cosine, sum_layers
from oracles import cosine_ref, mixture_scores_ref, ned_ref, plain_cosine_ranking_ref

SPEC = EmbeddingSpec(dim=6, num_layers=3, layer_set=(1, 2, 3))


def entry_from_rows(word, rows, sizes=None):
    rows = np.asarray(rows, dtype=np.float32)
    sizes = sizes or tuple(1 for _ in rows)
    weights = np.asarray(sizes, dtype=np.float64)
    mean = ((weights[:, None] * rows.astype(np.float64)).sum(0) / weights.sum())
    return SenseIndexEntry(word=word, mean_embedding=mean.astype(np.float32),
                           centroids=rows, cluster_sizes=tuple(sizes),
                           occurrence_count=int(sum(sizes)))


def hand_index(entries, dim):
    return SenseIndex(dim=dim, k=max(e.centroids.shape[0] for e in entries),
                      entries={e.word: e for e in entries})


class MappingProvider:
    """Test provider with preset vectors per replacement word."""

    def __init__(self, spec, target_emb, by_word=None, failures=()):
        self.spec = spec
        self.target_emb = target_emb
        self.by_word = by_word or {}
        self.failures = set(failures)

    def fetch(self, requests):
        out = []
        for req in requests:
            if req.replacement is None:
                out.append(self.target_emb)
            elif req.replacement in self.failures:
                out.append(RequestFailure("no alignment"))
            else:
                out.append(self.by_word[req.replacement])
        return out


class TestQueryValidation:
    def test_span_must_match_target(self):
        with pytest.raises(ContractError):
            SubstitutionQuery("he will pay the bill", 8, 11, "bill")

    def test_case_insensitive_match(self):
        q = SubstitutionQuery("Pay the bill", 0, 3, "pay")
        assert q.target_word == "pay"


class TestRetrieveTargetCluster:
    def test_single_cluster(self):
        entry = entry_from_rows("x", [[1.0, 0.0, 0.0]])
        assert retrieve_target_cluster(entry, np.array([0.2, 0.9, 0.0])) == 0

    def test_hand_comparison(self):
        entry = entry_from_rows("x", [[1, 0, 0], [0, 1, 0]])
        assert retrieve_target_cluster(entry, np.array([0.9, 0.1, 0.0])) == 0
        assert retrieve_target_cluster(entry, np.array([0.1, 0.9, 0.0])) == 1

    def test_tie_takes_lower_id(self):
        entry = entry_from_rows("x", [[1, 0, 0], [0, 1, 0]])
        assert retrieve_target_cluster(entry, np.array([0.5, 0.5, 0.0])) == 0


class TestScoreAll:
    def test_three_word_toy_vs_brute_force(self):
        index = hand_index([
            entry_from_rows("aa", [[1.0, 0.2, 0.0], [0.1, 0.9, 0.3]]),
            entry_from_rows("bb", [[0.4, 0.4, 0.8]]),
            entry_from_rows("cc", [[0.0, 1.0, 0.0], [0.7, 0.0, 0.7]]),
        ], dim=3)
        fxc = np.array([0.8, 0.3, 0.5])
        cfg = GenerationConfig(lambda_=0.7, rerank_enabled=False)
        got = score_all(fxc, index.entries["aa"], index, cfg)
        want = mixture_scores_ref(index, fxc, "aa", 0.7)
        for cand in got:
            assert cand.score == want[cand.word][0]
            assert cand.best_cluster == want[cand.word][1]

    @pytest.mark.parametrize("lam", [0.0, 0.3, 0.7, 1.0])
    def test_random_index_exact_vs_oracle(self, lam):
        index = raw_index(30, dim=8, k=4, seed=5)
        rng = np.random.default_rng(17)
        fxc = rng.standard_normal(8)
        target = list(index.entries)[3]
        cfg = GenerationConfig(lambda_=lam)
        got = score_all(fxc, index.entries[target], index, cfg)
        want = mixture_scores_ref(index, fxc, target, lam)
        expected_order = sorted(want, key=lambda w: (-want[w][0], w))
        assert [c.word for c in got] == expected_order
        for cand in got:
            assert cand.score == want[cand.word][0]
            assert cand.best_cluster == want[cand.word][1]

    def test_oov_target_forces_lambda_one(self):
        index = raw_index(10, dim=5, k=3, seed=2)
        fxc = np.random.default_rng(0).standard_normal(5)
        got = score_all(fxc, None, index, GenerationConfig(lambda_=0.3))
        want = mixture_scores_ref(index, fxc, "not-in-index", 0.3)
        for cand in got:
            assert cand.score == want[cand.word][0]
            assert cand.global_sim == 0.0

    def test_lambda_zero_fixed_within_cluster_basin(self):
        index = hand_index([
            entry_from_rows("tgt", [[1, 0, 0], [0, 1, 0]]),
            entry_from_rows("bb", [[0.5, 0.5, 0.7]]),
            entry_from_rows("cc", [[0.9, 0.1, 0.1]]),
        ], dim=3)
        cfg = GenerationConfig(lambda_=0.0)
        a = score_all(np.array([0.9, 0.05, 0.0]), index.entries["tgt"], index, cfg)
        b = score_all(np.array([0.95, 0.02, 0.0]), index.entries["tgt"], index, cfg)
        assert [(c.word, c.score) for c in a] == [(c.word, c.score) for c in b]

    def test_lambda_mix_flips_ranking(self):
        # in-context winner loses once the global term enters at 0.7
        index = hand_index([
            entry_from_rows("tgt", [[0.0, 1.0, 0.0]]),
            entry_from_rows("bb", [[1.0, 0.0, 0.0]]),
            entry_from_rows("cc", [[0.8, 0.6, 0.0]]),
        ], dim=3)
        fxc = np.array([1.0, 0.0, 0.0])
        entry = index.entries["tgt"]
        top_lam1 = score_all(fxc, entry, index, GenerationConfig(lambda_=1.0))
        top_lam07 = score_all(fxc, entry, index, GenerationConfig(lambda_=0.7))
        order1 = [c.word for c in top_lam1 if c.word != "tgt"]
        order07 = [c.word for c in top_lam07 if c.word != "tgt"]
        assert order1[:2] == ["bb", "cc"]
        assert order07[:2] == ["cc", "bb"]

    def test_k1_override_uses_means_and_reduces_to_plain_cosine(self):
        index = random_index(15, dim=6, k=3, seed=9)
        fxc = np.random.default_rng(3).standard_normal(6)
        cfg = GenerationConfig(lambda_=1.0, k_override=1)
        got = score_all(fxc, None, index, cfg)
        want = plain_cosine_ranking_ref(index, fxc)
        assert [(c.word, c.score) for c in got] == want

    def test_total_order(self):
        index = raw_index(40, dim=4, k=3, seed=11)
        fxc = np.random.default_rng(4).standard_normal(4)
        got = score_all(fxc, None, index, GenerationConfig())
        for a, b in zip(got, got[1:]):
            assert a.score > b.score or (a.score == b.score and a.word < b.word)

    def test_components_recompose_score(self):
        index = raw_index(20, dim=6, k=4, seed=13)
        fxc = np.random.default_rng(5).standard_normal(6)
        target = list(index.entries)[0]
        lam = 0.7
        for cand in score_all(fxc, index.entries[target], index, GenerationConfig(lambda_=lam)):
            assert cand.score == lam * cand.in_context + (1.0 - lam) * cand.global_sim

    def test_random_cluster_choice_is_seeded(self):
        index = raw_index(25, dim=5, k=4, seed=7)
        fxc = np.random.default_rng(6).standard_normal(5)
        cfg = GenerationConfig(cluster_choice="random", seed=99)
        a = score_all(fxc, None, index, cfg)
        b = score_all(fxc, None, index, cfg)
        assert [(c.word, c.score, c.best_cluster) for c in a] == \
               [(c.word, c.score, c.best_cluster) for c in b]
        maxed = score_all(fxc, None, index, GenerationConfig(seed=99))
        assert [(c.word, c.best_cluster) for c in a] != \
               [(c.word, c.best_cluster) for c in maxed]

    def test_ranking_invariant_under_positive_rescaling(self):
        index = raw_index(30, dim=6, k=3, seed=19)
        rng = np.random.default_rng(23)
        for alpha in (0.5, 3.7):
            scaled_entries = {}
            for word, e in index.entries.items():
                scaled_entries[word] = SenseIndexEntry(
                    word=word,
                    mean_embedding=(e.mean_embedding * np.float32(alpha)),
                    centroids=(e.centroids * np.float32(alpha)),
                    cluster_sizes=e.cluster_sizes,
                    occurrence_count=e.occurrence_count)
            scaled = SenseIndex(dim=index.dim, k=index.k, entries=scaled_entries)
            for _ in range(10):
                fxc = rng.standard_normal(6)
                target = list(index.entries)[int(rng.integers(len(index.entries)))]
                cfg = GenerationConfig(lambda_=0.7)
                base = score_all(fxc, index.entries[target], index, cfg)
                resc = score_all(fxc, scaled.entries[target], scaled, cfg)
                assert [c.word for c in base] == [c.word for c in resc]


class TestHeuristicFilter:
    def cands(self, *words):
        return [ScoredCandidate(w, 0.0, 0, 0.0, 0.0) for w in words]

    def test_pay_payer_filtered(self):
        out = heuristic_filter(self.cands("payer", "wage"), "pay", 0.5)
        assert [c.word for c in out] == ["wage"]

    def test_great_terrific_kept(self):
        assert ned_ref("great", "terrific") == pytest.approx(0.875)
        out = heuristic_filter(self.cands("terrific"), "great", 0.5)
        assert [c.word for c in out] == ["terrific"]

    def test_threshold_zero_removes_nothing(self):
        out = heuristic_filter(self.cands("pay", "payer", "wage"), "pay", 0.0)
        assert [c.word for c in out] == ["pay", "payer", "wage"]

    def test_order_preserved_and_never_grows(self):
        rng = np.random.default_rng(31)
        alphabet = list("abcd")
        for _ in range(50):
            words = ["".join(rng.choice(alphabet, size=rng.integers(1, 7)))
                     for _ in range(12)]
            threshold = float(rng.uniform(0, 1))
            out = heuristic_filter(self.cands(*words), "abc", threshold)
            kept = [c.word for c in out]
            assert len(kept) <= len(words)
            expected = [w for w in words if ned_ref("abc", w) >= threshold]
            assert kept == expected

    def test_bad_threshold(self):
        with pytest.raises(ContractError):
            heuristic_filter([], "x", 1.5)


def layered(spec, arrays):
    return LayeredEmbedding(spec, {l: np.asarray(a, dtype=np.float32)
                                   for l, a in zip(spec.layer_set, arrays)})


class TestRerank:
    def setup_method(self):
        self.spec = EmbeddingSpec(dim=2, num_layers=3, layer_set=(1, 2, 3))
        self.query = SubstitutionQuery("the cat sat", 4, 7, "cat")
        self.target = layered(self.spec, [[1, 0], [0, 1], [1, 1]])

    def test_hand_computed_mean_of_layer_cosines(self):
        c1 = layered(self.spec, [[1, 1], [1, 0], [0, 1]])
        c2 = layered(self.spec, [[2, 0], [0, 3], [1, 1]])
        provider = MappingProvider(self.spec, self.target, {"one": c1, "two": c2})
        cands = [ScoredCandidate("one", 0.5, 0, 0.5, 0.0),
                 ScoredCandidate("two", 0.4, 0, 0.4, 0.0)]
        out = rerank(cands, self.query, provider, target_emb=self.target)
        expected = {}
        for word, emb in (("one", c1), ("two", c2)):
            sims = [cosine_ref(emb.vectors[l], self.target.vectors[l])
                    for l in self.spec.layer_set]
            expected[word] = sum(sims) / len(sims)
        assert {c.word: c.score for c in out} == pytest.approx(expected, abs=1e-12)
        assert [c.word for c in out] == sorted(expected, key=lambda w: -expected[w])

    def test_identity_candidate_scores_exactly_one(self):
        stub = StubProvider(self.spec, seed=8)
        cands = [ScoredCandidate("cat", 0.2, 0, 0.2, 0.0)]
        out = rerank(cands, self.query, stub)
        assert out[0].score == 1.0

    def test_single_layer_equals_embedding_average_route(self):
        spec1 = EmbeddingSpec(dim=2, num_layers=1, layer_set=(1,))
        target = layered(spec1, [[1, 0]])
        cand_emb = layered(spec1, [[1, 1]])
        provider = MappingProvider(spec1, target, {"one": cand_emb})
        out = rerank([ScoredCandidate("one", 0.0, 0, 0.0, 0.0)],
                     SubstitutionQuery("a cat", 2, 5, "cat"), provider,
                     target_emb=target)
        assert out[0].score == cosine(np.array([1.0, 1.0]), np.array([1.0, 0.0]))

    def test_failed_candidate_keeps_score_with_flag(self):
        c1 = layered(self.spec, [[1, 0], [0, 1], [1, 1]])  # equals target: score 1.0
        provider = MappingProvider(self.spec, self.target, {"good": c1},
                                   failures={"broken"})
        cands = [ScoredCandidate("broken", 0.9, 0, 0.9, 0.0),
                 ScoredCandidate("good", 0.1, 0, 0.1, 0.0)]
        out = rerank(cands, self.query, provider, target_emb=self.target)
        by_word = {c.word: c for c in out}
        assert by_word["broken"].score == 0.9
        assert by_word["broken"].rerank_failed
        assert by_word["good"].score == 1.0
        assert not by_word["good"].rerank_failed
        assert [c.word for c in out] == ["good", "broken"]

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            rerank([], self.query, StubProvider(self.spec))

    def test_target_fetch_failure_is_provider_error(self):
        class Broken:
            def fetch(self, requests):
                return [RequestFailure("nope")] * len(requests)

        with pytest.raises(ProviderError):
            target_embedding(self.query, Broken())


class TestGenerate:
    def make_query_and_fxc(self, spec, seed=0):
        query = SubstitutionQuery("the zzz sat on the mat", 4, 7, "zzz")
        stub = StubProvider(spec, seed=seed)
        emb = target_embedding(query, stub)
        return query, stub, sum_layers(emb)

    def test_candidate_matching_fxc_ranks_first(self):
        query, stub, fxc = self.make_query_and_fxc(SPEC, seed=1)
        index = hand_index([
            entry_from_rows("aa", [np.ones(6) * 0.3]),
            entry_from_rows("bb", [fxc]),
            entry_from_rows("cc", [-fxc]),
        ], dim=6)
        cfg = GenerationConfig(rerank_enabled=False, heuristic_enabled=False, top_n=3)
        out = generate(query, index, stub, cfg)
        assert out[0].word == "bb"

    def test_heuristic_toggle_restores_payer(self):
        rng = np.random.default_rng(2)
        words = ["pay", "payer", "wage", "fee", "cost"]
        index = hand_index([entry_from_rows(w, [rng.standard_normal(6)]) for w in words],
                           dim=6)
        query = SubstitutionQuery("they pay the rent each month", 5, 8, "pay")
        stub = StubProvider(SPEC, seed=3)
        base = dict(rerank_enabled=False, top_n=10)
        with_h = generate(query, index, stub, GenerationConfig(heuristic_enabled=True, **base))
        without = generate(query, index, stub, GenerationConfig(heuristic_enabled=False, **base))
        assert "payer" not in [c.word for c in with_h]
        assert "payer" in [c.word for c in without]

    def test_target_itself_always_dropped(self):
        rng = np.random.default_rng(4)
        index = hand_index([entry_from_rows(w, [rng.standard_normal(6)])
                            for w in ["pay", "wage"]], dim=6)
        query = SubstitutionQuery("they pay the rent each month", 5, 8, "pay")
        out = generate(query, index, StubProvider(SPEC, seed=5),
                       GenerationConfig(heuristic_enabled=False, rerank_enabled=False,
                                        heuristic_threshold=0.0, top_n=10))
        assert "pay" not in [c.word for c in out]

    def test_deterministic_across_runs(self):
        index = random_index(12, dim=6, k=2, seed=6, layers=SPEC.layer_set)
        query = SubstitutionQuery("the dog chased a ball", 4, 7, "dog")
        runs = []
        for _ in range(2):
            out = generate(query, index, StubProvider(SPEC, seed=7),
                           GenerationConfig(top_n=5))
            runs.append([(c.word, c.score, c.best_cluster) for c in out])
        assert runs[0] == runs[1]

    def test_lemma_folding_dedupes(self):
        from dlxsub.metrics import LemmaTable

        query, stub, fxc = self.make_query_and_fxc(SPEC, seed=8)
        scores = {"running": fxc, "ran": fxc * 0.9, "walk": fxc * -0.5}
        index = hand_index([entry_from_rows(w, [v]) for w, v in scores.items()], dim=6)
        table = LemmaTable({"running": "run", "ran": "run"})
        out = generate(query, index, stub,
                       GenerationConfig(rerank_enabled=False, heuristic_enabled=False,
                                        top_n=5),
                       lemma_table=table)
        assert [c.word for c in out] == ["run", "walk"]

    def test_rerank_m_limits_provider_calls(self):
        calls = []

        class CountingStub(StubProvider):
            def fetch(self, requests):
                calls.append(len(requests))
                return super().fetch(requests)

        index = raw_index(20, dim=6, k=2, seed=9)
        query = SubstitutionQuery("a cat chased the small mouse", 2, 5, "cat")
        generate(query, index, CountingStub(SPEC, seed=10),
                 GenerationConfig(rerank_m=7, top_n=3, heuristic_enabled=False))
        assert calls == [1, 7]  # one target fetch, then the top-M batch


class TestGenerationConfig:
    def test_bad_lambda(self):
        with pytest.raises(ConfigError):
            GenerationConfig(lambda_=1.5)

    def test_bad_k_override(self):
        with pytest.raises(ConfigError):
            GenerationConfig(k_override=3)

    def test_bad_cluster_choice(self):
        with pytest.raises(ConfigError):
            GenerationConfig(cluster_choice="weird")
