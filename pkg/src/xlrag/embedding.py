"""Unit-norm dense vectors: a deterministic synthetic embedder and a remote client.

The synthetic embedder composes each vector from three seeded pseudorandom
components:

    normalize(alpha * topic(pair) + beta * axis(language) + gamma * noise(id))

where topic(pair) = sqrt(s) * center(cluster) + sqrt(1 - s) * offset(pair).
Language axes are mutually orthonormal by construction, and topic/noise
components are drawn in the orthogonal complement of the axis subspace, with
cluster centers and pair offsets orthonormalized within each cluster. That
makes the cosine geometry exact: at gamma = 0 the same-pair cross-language
cosine is 1/(1+beta^2) and a same-language, same-cluster distractor scores
(s+beta^2)/(1+beta^2), so the distractor outranks the cross-language document
exactly when s > 1 - beta^2.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .corpus import DEFAULT_LANGUAGES, ClusterInfo, Language, Passage
from .remote import API_KEY_ENV, FileCache, Transport, call_with_retry, content_key, default_transport

if TYPE_CHECKING:  # pragma: no cover
    from .benchmark import BenchmarkItem


class EmbeddingError(ValueError):
    """Invalid embedder parameters, inputs, or remote embedding responses."""


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        raise EmbeddingError("cannot normalize a zero vector")
    return v / norm


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; inputs are normalized internally."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise EmbeddingError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu < 1e-12 or nv < 1e-12:
        raise EmbeddingError("cosine undefined for zero vectors")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _seeded_rng(seed: int, key: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}|{key}".encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "big") for i in range(0, 32, 4)]
    return np.random.default_rng(np.random.SeedSequence(words))


@dataclass(frozen=True)
class SyntheticEmbedderParams:
    dims: int = 256
    alpha: float = 1.0
    beta: float = 0.35
    gamma: float = 0.15
    topic_similarity: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dims < 8:
            raise EmbeddingError("dims must be >= 8")
        if self.alpha <= 0:
            raise EmbeddingError("alpha must be > 0")
        if self.beta < 0 or self.gamma < 0:
            raise EmbeddingError("beta and gamma must be >= 0")
        if not 0.0 <= self.topic_similarity <= 1.0:
            raise EmbeddingError("topic_similarity must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "topic_similarity": self.topic_similarity,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SyntheticEmbedderParams":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


class SyntheticEmbedder:
    """Deterministic embedder over cluster metadata; pure and freely parallel."""

    source = "synthetic"

    def __init__(
        self,
        params: SyntheticEmbedderParams,
        clusters: Mapping[str, ClusterInfo],
        language_set: Sequence[Language] = DEFAULT_LANGUAGES,
    ):
        self.params = params
        self.clusters = dict(clusters)
        self.languages = tuple(sorted(set(language_set)))
        if len(self.languages) < 2:
            raise EmbeddingError("language set must contain at least two languages")
        if params.dims < len(self.languages) + 2:
            raise EmbeddingError("dims too small for the configured language set")
        self._axes = self._build_axes()
        members: dict[int, list[str]] = {}
        for pair_id, info in self.clusters.items():
            members.setdefault(info.cluster_id, []).append(pair_id)
        self._cluster_members = {cid: sorted(pids) for cid, pids in members.items()}
        self._cluster_bases: dict[int, dict[str, np.ndarray]] = {}
        self._topics: dict[str, np.ndarray] = {}

    def _raw(self, key: str) -> np.ndarray:
        return _seeded_rng(self.params.seed, key).standard_normal(self.params.dims)

    def _build_axes(self) -> dict[Language, np.ndarray]:
        axes: dict[Language, np.ndarray] = {}
        basis: list[np.ndarray] = []
        for lang in self.languages:
            v = self._raw(f"axis|{lang}")
            for b in basis:
                v = v - np.dot(v, b) * b
            v = _unit(v)
            basis.append(v)
            axes[lang] = v
        return axes

    def _off_axis(self, v: np.ndarray) -> np.ndarray:
        for axis in self._axes.values():
            v = v - np.dot(v, axis) * axis
        return v

    def _cluster_basis(self, cluster_id: int) -> dict[str, np.ndarray]:
        """Orthonormal {center, offsets} for one cluster, all orthogonal to the axes."""
        cached = self._cluster_bases.get(cluster_id)
        if cached is not None:
            return cached
        taken: list[np.ndarray] = []

        def draw(key: str) -> np.ndarray:
            v = self._off_axis(self._raw(key))
            for b in taken:
                v = v - np.dot(v, b) * b
            v = _unit(v)
            taken.append(v)
            return v

        basis = {"__center__": draw(f"center|{cluster_id}")}
        for pair_id in self._cluster_members.get(cluster_id, []):
            if len(taken) >= self.params.dims - len(self.languages):
                # cluster larger than the available orthogonal complement
                v = _unit(self._off_axis(self._raw(f"offset|{pair_id}")))
                basis[pair_id] = v
            else:
                basis[pair_id] = draw(f"offset|{pair_id}")
        self._cluster_bases[cluster_id] = basis
        return basis

    def _topic(self, pair_id: str) -> np.ndarray:
        cached = self._topics.get(pair_id)
        if cached is not None:
            return cached
        info = self.clusters.get(pair_id)
        if info is None:
            raise EmbeddingError(f"no cluster metadata for pair {pair_id!r}")
        basis = self._cluster_basis(info.cluster_id)
        s = info.topic_similarity
        topic = _unit(np.sqrt(s) * basis["__center__"] + np.sqrt(1.0 - s) * basis[pair_id])
        self._topics[pair_id] = topic
        return topic

    def _noise(self, key: str) -> np.ndarray:
        return _unit(self._off_axis(self._raw(f"noise|{key}")))

    def _compose(self, topic: np.ndarray, language: Language, noise_key: str) -> np.ndarray:
        axis = self._axes.get(language)
        if axis is None:
            raise EmbeddingError(f"unknown language {language!r}")
        p = self.params
        v = p.alpha * topic + p.beta * axis
        if p.gamma > 0:
            v = v + p.gamma * self._noise(noise_key)
        return _unit(v)

    def embed_passage(self, passage: Passage) -> np.ndarray:
        return self._compose(self._topic(passage.pair_id), passage.language, f"passage|{passage.passage_id}")

    def embed_query(self, item: "BenchmarkItem") -> np.ndarray:
        return self._compose(self._topic(item.gold_pair_id), item.user_language, f"query|{item.item_id}")

    def embed_corpus(self, passages: Sequence[Passage]) -> dict[str, np.ndarray]:
        return {p.passage_id: self.embed_passage(p) for p in passages}


@dataclass
class EndpointConfig:
    """Remote embedding service: JSON-over-HTTP, auth via XLRAG_API_KEY."""

    base_url: str
    model: str
    batch_size: int = 32
    attempts: int = 3
    backoff: float = 0.5
    timeout: float = 30.0
    api_key_env: str = API_KEY_ENV
    query_prefix: str = ""
    passage_prefix: str = ""


class EmbeddingClient:
    """Order-preserving batch embedding with a content-hash cache and retries."""

    source = "remote"

    def __init__(
        self,
        config: EndpointConfig,
        cache_dir: str = "cache/embeddings",
        transport: Transport | None = None,
    ):
        self.config = config
        self.cache = FileCache(cache_dir)
        self.transport = transport or default_transport(config.timeout, config.api_key_env)
        self.network_calls = 0
        self.cache_hits = 0

    def _request_batch(self, texts: list[str]) -> list[np.ndarray]:
        payload = {"model": self.config.model, "input": texts}

        def call() -> dict:
            self.network_calls += 1
            return self.transport(self.config.base_url, payload)

        response = call_with_retry(call, self.config.attempts, self.config.backoff)
        data = response.get("data")
        if not isinstance(data, list) or len(data) != len(texts):
            raise EmbeddingError(
                f"embedding endpoint returned {0 if not isinstance(data, list) else len(data)} "
                f"vectors for {len(texts)} inputs"
            )
        vectors = []
        for entry in data:
            try:
                vec = np.asarray(entry["embedding"], dtype=float)
            except (KeyError, TypeError, ValueError) as exc:
                raise EmbeddingError(f"embedding endpoint returned a malformed entry: {exc}") from exc
            if vec.ndim != 1 or vec.size == 0:
                raise EmbeddingError("embedding endpoint returned a malformed vector")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError("embedding endpoint returned non-finite values")
            vectors.append(_unit(vec))
        dims = {v.shape[0] for v in vectors}
        if len(dims) > 1:
            raise EmbeddingError(f"dimension mismatch within batch: {sorted(dims)}")
        return vectors

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        results: dict[int, np.ndarray] = {}
        positions: dict[str, list[int]] = {}  # unique missing text -> indices
        missing: list[str] = []
        for i, text in enumerate(texts):
            key = content_key(self.config.model, text)
            cached = self.cache.get(key)
            if cached is not None:
                self.cache_hits += 1
                results[i] = np.asarray(cached["embedding"], dtype=float)
            else:
                if text not in positions:
                    positions[text] = []
                    missing.append(text)
                positions[text].append(i)
        for start in range(0, len(missing), self.config.batch_size):
            batch = missing[start : start + self.config.batch_size]
            vectors = self._request_batch(batch)
            for text, vec in zip(batch, vectors):
                self.cache.put(content_key(self.config.model, text), {"embedding": vec.tolist()})
                for i in positions[text]:
                    results[i] = vec
        out = [results[i] for i in range(len(texts))]
        dims = {v.shape[0] for v in out}
        if len(dims) > 1:
            raise EmbeddingError(f"dimension mismatch across batch: {sorted(dims)}")
        return out

    def embed_queries(self, texts: Sequence[str]) -> list[np.ndarray]:
        return self.embed_batch([self.config.query_prefix + t for t in texts])

    def embed_passages(self, texts: Sequence[str]) -> list[np.ndarray]:
        return self.embed_batch([self.config.passage_prefix + t for t in texts])
