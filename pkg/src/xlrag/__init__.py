"""Bilingual RAG pipeline and evaluation harness with language-balanced retrieval."""

__version__ = "0.1.0"

from .corpus import (
    Corpus,
    ParallelDocument,
    Passage,
    SyntheticCorpusParams,
    assign_document_languages,
    build_corpus,
    chunk_document,
    generate_synthetic_corpus,
    load_parallel_documents,
)
from .benchmark import BenchmarkItem, CategoryProfile, generate_benchmark, load_benchmark, save_benchmark
from .embedding import EmbeddingClient, SyntheticEmbedder, SyntheticEmbedderParams, cosine
from .retrieval import (
    RankedList,
    VectorIndex,
    retrieve_balanced,
    retrieve_direct,
    retrieve_language_oracle,
    search,
)
from .rerank import RerankResult, rerank
from .generation import Answer, build_generation_prompt, generate_answer, mock_generate, no_rag_answer
from .evaluation import (
    MetricValue,
    SegmentReport,
    StageRecord,
    compute_component_metrics,
    hits_at_k,
    judge_answer,
    judge_relevance,
    parse_judge_list,
    segment_breakdown,
    wald_ci,
)
from .orchestrator import RunConfig, compare_policies, run_pipeline

__all__ = [
    "Answer",
    "BenchmarkItem",
    "CategoryProfile",
    "Corpus",
    "EmbeddingClient",
    "MetricValue",
    "ParallelDocument",
    "Passage",
    "RankedList",
    "RerankResult",
    "RunConfig",
    "SegmentReport",
    "StageRecord",
    "SyntheticCorpusParams",
    "SyntheticEmbedder",
    "SyntheticEmbedderParams",
    "VectorIndex",
    "assign_document_languages",
    "build_corpus",
    "build_generation_prompt",
    "chunk_document",
    "compare_policies",
    "compute_component_metrics",
    "cosine",
    "generate_answer",
    "generate_benchmark",
    "generate_synthetic_corpus",
    "hits_at_k",
    "judge_answer",
    "judge_relevance",
    "load_benchmark",
    "load_parallel_documents",
    "mock_generate",
    "no_rag_answer",
    "parse_judge_list",
    "rerank",
    "retrieve_balanced",
    "retrieve_direct",
    "retrieve_language_oracle",
    "run_pipeline",
    "save_benchmark",
    "search",
    "segment_breakdown",
    "wald_ci",
]
