import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dlxsub.index import SenseIndex, SenseIndexEntry, build_entry
from dlxsub.seeds import derive_seed
from dlxsub.vectors import EmbeddingSpec, LayeredEmbedding

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def make_embedding(spec: EmbeddingSpec, rng: np.random.Generator) -> LayeredEmbedding:
    return LayeredEmbedding(
        spec, {l: rng.standard_normal(spec.dim).astype(np.float32) for l in spec.layer_set})


def random_index(n_words: int, dim: int, k: int, seed: int,
                 layers: tuple[int, ...] = (1, 2, 3),
                 occurrences: int = 12) -> SenseIndex:
    """Index built through the real clustering path from random embeddings."""
    spec = EmbeddingSpec(dim=dim, num_layers=max(layers), layer_set=layers)
    rng = np.random.default_rng(seed)
    entries = {}
    for i in range(n_words):
        word = f"w{i:03d}"
        occs = [make_embedding(spec, rng) for _ in range(occurrences)]
        entries[word] = build_entry(word, occs, k, derive_seed(seed, "kmeans", word))
    return SenseIndex(dim=dim, k=k, entries=entries, spec=spec)


def raw_index(n_words: int, dim: int, k: int, seed: int) -> SenseIndex:
    """Index with directly constructed entries (no clustering); fast for IO tests."""
    rng = np.random.default_rng(seed)
    entries = {}
    for i in range(n_words):
        word = f"word{i:04d}"
        nc = int(rng.integers(1, k + 1))
        sizes = tuple(int(s) for s in rng.integers(1, 9, size=nc))
        centroids = rng.standard_normal((nc, dim)).astype(np.float32)
        weights = np.asarray(sizes, dtype=np.float64)
        mean = ((weights[:, None] * centroids.astype(np.float64)).sum(axis=0)
                / weights.sum()).astype(np.float32)
        entries[word] = SenseIndexEntry(
            word=word, mean_embedding=mean, centroids=centroids,
            cluster_sizes=sizes, occurrence_count=int(sum(sizes)))
    return SenseIndex(dim=dim, k=k, entries=entries)


_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance" in report.nodeid and name.startswith("test_c"):
        try:
            number = int(name.split("_")[1][1:])
        except (IndexError, ValueError):
            return
        _CRITERIA[number] = (name, report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(_CRITERIA):
        name, outcome = _CRITERIA[number]
        flag = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"criterion {number}: {flag} ({name})")
