"""Language-partitioned exact dense index and the three retrieval policies.

Exact cosine scan, no ANN: desk-scale corpora keep this affordable and make
the brute-force test oracle exact. Scores are raw cosines compared across
languages without normalization; that cross-language comparison is precisely
the behavior under study.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, Language

INDEX_MAGIC = "XLRAG-IDX-1"

DIRECT = "direct"
ORACLE = "oracle"
BALANCED = "balanced"


class RetrievalError(ValueError):
    """Invalid index input, query, or policy parameters."""


@dataclass(frozen=True)
class Hit:
    passage_id: str
    language: Language
    score: float


@dataclass(frozen=True)
class RankedList:
    """Scored hits in non-increasing score order, ties by ascending passage_id."""

    query_id: str
    policy: str
    hits: tuple[Hit, ...]

    def passage_ids(self) -> list[str]:
        return [h.passage_id for h in self.hits]


class VectorIndex:
    """Immutable dense index; every entry sits in exactly one language partition."""

    def __init__(
        self,
        passage_ids: Sequence[str],
        pair_ids: Sequence[str],
        languages: Sequence[Language],
        matrix: np.ndarray,
        language_set: Sequence[Language],
        meta: dict | None = None,
    ):
        self.passage_ids = list(passage_ids)
        self.pair_ids = list(pair_ids)
        self.languages = list(languages)
        matrix = np.asarray(matrix, dtype=float)
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise RetrievalError("index contains a zero vector")
        # rows already unit-norm stay byte-exact so save/load round-trips scores
        needs = np.abs(norms - 1.0) > 1e-12
        self.matrix = matrix / np.where(needs, norms, 1.0)
        self.language_set = tuple(language_set)
        self.meta = meta or {}
        self.partitions: dict[Language, np.ndarray] = {
            lang: np.array([i for i, l in enumerate(self.languages) if l == lang], dtype=int)
            for lang in self.language_set
        }

    def __len__(self) -> int:
        return len(self.passage_ids)

    @property
    def dims(self) -> int:
        return int(self.matrix.shape[1])

    def vector_lookup(self) -> dict[str, np.ndarray]:
        return {pid: self.matrix[i] for i, pid in enumerate(self.passage_ids)}

    @classmethod
    def build(
        cls,
        corpus: Corpus,
        embeddings: Mapping[str, np.ndarray],
        meta: dict | None = None,
    ) -> "VectorIndex":
        if not corpus.passages:
            raise RetrievalError("cannot build an index over an empty corpus")
        passage_ids, pair_ids, languages, rows = [], [], [], []
        dims: int | None = None
        for p in corpus.passages:  # already sorted by passage_id
            vec = embeddings.get(p.passage_id)
            if vec is None:
                raise RetrievalError(f"missing embedding for passage {p.passage_id!r}")
            vec = np.asarray(vec, dtype=float)
            if dims is None:
                dims = vec.shape[0]
            elif vec.shape[0] != dims:
                raise RetrievalError(
                    f"dimension mismatch for {p.passage_id!r}: {vec.shape[0]} != {dims}"
                )
            passage_ids.append(p.passage_id)
            pair_ids.append(p.pair_id)
            languages.append(p.language)
            rows.append(vec)
        return cls(passage_ids, pair_ids, languages, np.vstack(rows), corpus.language_set, meta)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {
            "magic": INDEX_MAGIC,
            "dims": self.dims,
            "language_set": list(self.language_set),
            "count": len(self),
            "meta": self.meta,
        }
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, ensure_ascii=False) + "\n")
            for i, pid in enumerate(self.passage_ids):
                record = {
                    "passage_id": pid,
                    "pair_id": self.pair_ids[i],
                    "language": self.languages[i],
                    "vector": self.matrix[i].tolist(),
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        path = Path(path)
        if not path.exists():
            raise RetrievalError(f"index file not found: {path}")
        with path.open("r", encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("magic") != INDEX_MAGIC:
                raise RetrievalError(f"not a {INDEX_MAGIC} index: {path}")
            passage_ids, pair_ids, languages, rows = [], [], [], []
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                passage_ids.append(rec["passage_id"])
                pair_ids.append(rec["pair_id"])
                languages.append(rec["language"])
                rows.append(np.asarray(rec["vector"], dtype=float))
        if len(rows) != header["count"]:
            raise RetrievalError(f"index truncated: {len(rows)} entries, header says {header['count']}")
        return cls(passage_ids, pair_ids, languages, np.vstack(rows), header["language_set"], header.get("meta"))


def _prepare_query(index: VectorIndex, query_vec: np.ndarray) -> np.ndarray:
    q = np.asarray(query_vec, dtype=float)
    if q.shape != (index.dims,):
        raise RetrievalError(f"query dimension {q.shape} does not match index dims {index.dims}")
    norm = float(np.linalg.norm(q))
    if norm < 1e-12:
        raise RetrievalError("query vector has zero norm")
    return q / norm


def _ranked_rows(index: VectorIndex, scores: np.ndarray, rows: np.ndarray) -> list[int]:
    # rows ascend by passage_id, so a stable sort on -score breaks ties correctly
    order = np.argsort(-scores[rows], kind="stable")
    return [int(r) for r in rows[order]]


def _hits(index: VectorIndex, scores: np.ndarray, rows: Sequence[int]) -> tuple[Hit, ...]:
    return tuple(
        Hit(index.passage_ids[r], index.languages[r], float(scores[r])) for r in rows
    )


def search(
    index: VectorIndex,
    query_vec: np.ndarray,
    k: int,
    language_filter: Language | None = None,
    *,
    query_id: str = "",
    policy: str = DIRECT,
) -> RankedList:
    """Exact top-k by cosine over one language partition or the whole index."""
    if k < 1:
        raise RetrievalError(f"k must be >= 1, got {k}")
    q = _prepare_query(index, query_vec)
    if language_filter is None:
        rows = np.arange(len(index))
    else:
        rows = index.partitions.get(language_filter)
        if rows is None:
            raise RetrievalError(f"unknown language {language_filter!r}")
    scores = index.matrix @ q
    ranked = _ranked_rows(index, scores, rows)[:k]
    return RankedList(query_id=query_id, policy=policy, hits=_hits(index, scores, ranked))


def retrieve_direct(
    index: VectorIndex, query_vec: np.ndarray, k: int = 20, *, query_id: str = ""
) -> RankedList:
    """Top-k over the whole bilingual index, no language constraint."""
    return search(index, query_vec, k, None, query_id=query_id, policy=DIRECT)


def retrieve_language_oracle(
    index: VectorIndex,
    query_vec: np.ndarray,
    gold_doc_language: Language,
    k: int = 20,
    *,
    query_id: str = "",
) -> RankedList:
    """Analysis-only policy: search restricted to the gold document's language."""
    rows = index.partitions.get(gold_doc_language)
    if rows is None or len(rows) == 0:
        raise RetrievalError(f"empty partition for language {gold_doc_language!r}")
    return search(index, query_vec, k, gold_doc_language, query_id=query_id, policy=ORACLE)


def retrieve_balanced(
    index: VectorIndex,
    query_vec: np.ndarray,
    k_per_language: int = 10,
    *,
    query_id: str = "",
) -> RankedList:
    """Equal per-language quotas, merged by raw score.

    If a partition runs short, the shortfall is backfilled from the other
    partitions' next-best hits so the total stays min(L * k, index size).
    """
    if k_per_language < 1:
        raise RetrievalError(f"k_per_language must be >= 1, got {k_per_language}")
    q = _prepare_query(index, query_vec)
    scores = index.matrix @ q
    chosen: list[int] = []
    for lang in index.language_set:
        rows = index.partitions[lang]
        if len(rows):
            chosen.extend(_ranked_rows(index, scores, rows)[:k_per_language])
    target = min(len(index.language_set) * k_per_language, len(index))
    if len(chosen) < target:
        taken = set(chosen)
        pool = [r for r in range(len(index)) if r not in taken]
        pool.sort(key=lambda r: (-scores[r], r))
        chosen.extend(pool[: target - len(chosen)])
    chosen.sort(key=lambda r: (-scores[r], r))
    return RankedList(query_id=query_id, policy=BALANCED, hits=_hits(index, scores, chosen))
