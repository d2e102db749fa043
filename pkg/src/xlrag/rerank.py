"""Re-score retrieved candidates against the question and keep the top-m.

Reranker scores replace retrieval scores outright; the retrieval ordering is
ignored, which also makes reranking invariant to candidate permutation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import Passage
from .embedding import cosine
from .remote import API_KEY_ENV, FileCache, Transport, call_with_retry, content_key, default_transport
from .retrieval import RankedList

# (question, candidate passages) -> one relevance score per candidate
Scorer = Callable[[str, Sequence[Passage]], Sequence[float]]


class RerankError(ValueError):
    """Invalid rerank input or a failed scorer."""


@dataclass(frozen=True)
class RerankResult:
    kept: tuple[tuple[str, float], ...]
    dropped: tuple[tuple[str, float], ...]

    def kept_ids(self) -> list[str]:
        return [pid for pid, _ in self.kept]


def rerank(
    question: str,
    candidates: RankedList,
    scorer: Scorer,
    passages: Mapping[str, Passage],
    top_m: int = 5,
) -> RerankResult:
    """Score all candidates with the scorer and keep the top_m (ties by passage_id)."""
    if not candidates.hits:
        raise RerankError("cannot rerank an empty candidate list")
    if top_m < 1:
        raise RerankError(f"top_m must be >= 1, got {top_m}")
    try:
        cand = [passages[h.passage_id] for h in candidates.hits]
    except KeyError as exc:
        raise RerankError(f"candidate passage missing from corpus: {exc}") from exc
    scores = [float(s) for s in scorer(question, cand)]
    if len(scores) != len(cand):
        raise RerankError(f"scorer returned {len(scores)} scores for {len(cand)} candidates")
    order = sorted(range(len(cand)), key=lambda i: (-scores[i], cand[i].passage_id))
    pairs = [(cand[i].passage_id, scores[i]) for i in order]
    return RerankResult(kept=tuple(pairs[:top_m]), dropped=tuple(pairs[top_m:]))


def label_oracle_scorer(
    gold_pair_id: str,
    gold_answer: str,
    supports: Callable[[str, str], bool],
) -> Scorer:
    """Score 1 for gold-pair passages that contain the answer, 0 otherwise.

    With this scorer any relevant candidate ends up ranked first, so reranking
    is lossless whenever retrieval succeeded.
    """

    def score(question: str, passages: Sequence[Passage]) -> list[float]:
        return [
            1.0 if p.pair_id == gold_pair_id and supports(gold_answer, p.text) else 0.0
            for p in passages
        ]

    return score


def embedding_similarity_scorer(
    query_vec: np.ndarray, vectors: Mapping[str, np.ndarray]
) -> Scorer:
    """Fallback scorer: cosine between the query vector and each candidate vector."""

    def score(question: str, passages: Sequence[Passage]) -> list[float]:
        try:
            return [cosine(query_vec, vectors[p.passage_id]) for p in passages]
        except KeyError as exc:
            raise RerankError(f"no vector for candidate passage: {exc}") from exc

    return score


@dataclass
class CrossEncoderConfig:
    base_url: str
    model: str
    attempts: int = 3
    backoff: float = 0.5
    timeout: float = 30.0
    api_key_env: str = API_KEY_ENV


class CrossEncoderClient:
    """Remote pairwise scorer; caches per (model, question, document)."""

    source = "remote"

    def __init__(
        self,
        config: CrossEncoderConfig,
        cache_dir: str = "cache/rerank",
        transport: Transport | None = None,
    ):
        self.config = config
        self.cache = FileCache(cache_dir)
        self.transport = transport or default_transport(config.timeout, config.api_key_env)
        self.network_calls = 0
        self.cache_hits = 0

    def scores(self, question: str, texts: Sequence[str]) -> list[float]:
        results: dict[int, float] = {}
        missing: list[tuple[int, str]] = []
        for i, text in enumerate(texts):
            key = content_key(self.config.model, question, text)
            cached = self.cache.get(key)
            if cached is not None:
                self.cache_hits += 1
                results[i] = float(cached["score"])
            else:
                missing.append((i, text))
        if missing:
            payload = {
                "model": self.config.model,
                "query": question,
                "documents": [t for _, t in missing],
            }

            def call() -> dict:
                self.network_calls += 1
                return self.transport(self.config.base_url, payload)

            response = call_with_retry(call, self.config.attempts, self.config.backoff)
            raw = response.get("scores")
            if not isinstance(raw, list) or len(raw) != len(missing):
                raise RerankError(
                    f"reranker endpoint returned {0 if not isinstance(raw, list) else len(raw)} "
                    f"scores for {len(missing)} documents"
                )
            for (i, text), value in zip(missing, raw):
                score = float(value)
                self.cache.put(content_key(self.config.model, question, text), {"score": score})
                results[i] = score
        return [results[i] for i in range(len(texts))]

    def as_scorer(self) -> Scorer:
        def score(question: str, passages: Sequence[Passage]) -> list[float]:
            return self.scores(question, [p.text for p in passages])

        return score
