from __future__ import annotations

from pathlib import Path

import pytest

from xlrag.benchmark import TemplateQAGenerator, generate_benchmark
from xlrag.corpus import (
    SyntheticCorpusParams,
    assign_document_languages,
    build_corpus,
    generate_synthetic_corpus,
)
from xlrag.embedding import SyntheticEmbedder, SyntheticEmbedderParams
from xlrag.retrieval import VectorIndex

DATA_DIR = Path(__file__).parent / "data"


def golden(name: str) -> str:
    return (DATA_DIR / name).read_text(encoding="utf-8")


def make_corpus(n_clusters=3, pairs_per_cluster=4, seed=5, max_words=20, **kwargs):
    params = SyntheticCorpusParams(
        n_clusters=n_clusters, pairs_per_cluster=pairs_per_cluster, **kwargs
    )
    docs = generate_synthetic_corpus(params, seed)
    assignment = assign_document_languages(docs, seed)
    return build_corpus(docs, assignment, max_words, seed=seed)


@pytest.fixture(scope="session")
def small_corpus():
    return make_corpus()


@pytest.fixture(scope="session")
def small_items(small_corpus):
    return generate_benchmark(small_corpus, 24, seed=9, generator=TemplateQAGenerator())


@pytest.fixture(scope="session")
def small_embedder(small_corpus):
    return SyntheticEmbedder(SyntheticEmbedderParams(seed=3), small_corpus.clusters)


@pytest.fixture(scope="session")
def small_index(small_corpus, small_embedder):
    return VectorIndex.build(small_corpus, small_embedder.embed_corpus(small_corpus.passages))
