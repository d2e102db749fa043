from __future__ import annotations

import concurrent.futures

import numpy as np
import pytest

from xlrag.benchmark import BenchmarkItem, CategoryProfile
from xlrag.corpus import ClusterInfo, Passage
from xlrag.embedding import (
    EmbeddingClient,
    EmbeddingError,
    EndpointConfig,
    SyntheticEmbedder,
    SyntheticEmbedderParams,
    cosine,
)
from xlrag.remote import FileCache, RemoteCallError

BETA = 0.35
CATEGORY = CategoryProfile("ar", "concise-NL", "similar", "factoid", "advice")


def passage(pair_id, language, chunk=0):
    return Passage(f"{pair_id}::{language}::{chunk}", pair_id, language, chunk, "text")


def item(gold_pair, user_language, item_id="item-00000"):
    return BenchmarkItem(item_id, "q", "a", user_language, gold_pair, "en", CATEGORY)


def two_pair_embedder(s=0.9, gamma=0.0, beta=BETA, seed=7):
    clusters = {"pa": ClusterInfo(0, s), "pb": ClusterInfo(0, s)}
    params = SyntheticEmbedderParams(gamma=gamma, beta=beta, seed=seed)
    return SyntheticEmbedder(params, clusters)


# --- synthetic embedder ------------------------------------------------------------------


def test_same_passage_twice_identical():
    emb = two_pair_embedder(gamma=0.15)
    v1 = emb.embed_passage(passage("pa", "ar"))
    v2 = emb.embed_passage(passage("pa", "ar"))
    assert v1.tobytes() == v2.tobytes()


def test_fresh_embedder_reproduces_bytes():
    v1 = two_pair_embedder(gamma=0.15).embed_passage(passage("pa", "ar"))
    v2 = two_pair_embedder(gamma=0.15).embed_passage(passage("pa", "ar"))
    assert v1.tobytes() == v2.tobytes()


def test_unit_norms(small_corpus, small_embedder):
    for p in small_corpus.passages[:40]:
        assert abs(np.linalg.norm(small_embedder.embed_passage(p)) - 1.0) < 1e-6


def test_same_pair_same_language_cosine_one_at_gamma_zero():
    emb = two_pair_embedder()
    v1 = emb.embed_passage(passage("pa", "ar", 0))
    v2 = emb.embed_passage(passage("pa", "ar", 1))
    assert cosine(v1, v2) == pytest.approx(1.0, abs=1e-6)


def test_cross_language_same_pair_closed_form():
    emb = two_pair_embedder()
    v_ar = emb.embed_passage(passage("pa", "ar"))
    v_en = emb.embed_passage(passage("pa", "en"))
    assert cosine(v_ar, v_en) == pytest.approx(1 / (1 + BETA**2), abs=0.02)


def test_same_language_distractor_closed_form_and_gap():
    emb = two_pair_embedder(s=0.9)
    qv = emb.embed_query(item("pa", "ar"))
    gold_cross = emb.embed_passage(passage("pa", "en"))
    distractor_same = emb.embed_passage(passage("pb", "ar"))
    cos_gold = cosine(qv, gold_cross)
    cos_distractor = cosine(qv, distractor_same)
    assert cos_distractor == pytest.approx((0.9 + BETA**2) / (1 + BETA**2), abs=0.02)
    assert cos_gold == pytest.approx(1 / (1 + BETA**2), abs=0.02)
    assert cos_distractor > cos_gold


def test_language_axis_removed_restores_cross_language_match():
    emb = two_pair_embedder(beta=0.0)
    qv = emb.embed_query(item("pa", "ar"))
    gold_cross = emb.embed_passage(passage("pa", "en"))
    assert cosine(qv, gold_cross) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("s", [0.80, 0.8675, 0.87, 0.8875, 0.89, 0.95])
def test_crossover_law_both_directions(s):
    emb = two_pair_embedder(s=s)
    qv = emb.embed_query(item("pa", "ar"))
    cos_gold = cosine(qv, emb.embed_passage(passage("pa", "en")))
    cos_distractor = cosine(qv, emb.embed_passage(passage("pb", "ar")))
    assert (cos_distractor > cos_gold) == (s > 1 - BETA**2)


def test_beta_monotonicity():
    betas = [0.0, 0.2, 0.35, 0.5, 0.8]
    cross, distractor = [], []
    for beta in betas:
        emb = two_pair_embedder(beta=beta)
        qv = emb.embed_query(item("pa", "ar"))
        cross.append(cosine(qv, emb.embed_passage(passage("pa", "en"))))
        distractor.append(cosine(qv, emb.embed_passage(passage("pb", "ar"))))
    assert all(a >= b - 1e-9 for a, b in zip(cross, cross[1:]))
    assert all(b >= a - 1e-9 for a, b in zip(distractor, distractor[1:]))


def test_unknown_pair_rejected():
    emb = two_pair_embedder()
    with pytest.raises(EmbeddingError, match="cluster metadata"):
        emb.embed_passage(passage("unknown", "ar"))


def test_unknown_language_rejected():
    emb = two_pair_embedder()
    with pytest.raises(EmbeddingError, match="language"):
        emb.embed_passage(passage("pa", "fr"))


def test_params_validation():
    with pytest.raises(EmbeddingError):
        SyntheticEmbedderParams(alpha=0.0)
    with pytest.raises(EmbeddingError):
        SyntheticEmbedderParams(beta=-0.1)
    with pytest.raises(EmbeddingError):
        SyntheticEmbedderParams(topic_similarity=1.2)


# --- cosine ------------------------------------------------------------------------------


def test_cosine_basics():
    u = np.array([0.3, -0.4, 0.5])
    assert cosine(u, u) == pytest.approx(1.0)
    assert cosine(u, -u) == pytest.approx(-1.0)
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert cosine(e1, e2) == pytest.approx(0.0)


def test_cosine_hand_value():
    u = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    v = np.array([1.0, 0.0, 0.0])
    assert cosine(u, v) == pytest.approx(1 / np.sqrt(2), abs=1e-12)


def test_cosine_normalizes_internally():
    u = np.array([10.0, 0.0])
    v = np.array([0.5, 0.0])
    assert cosine(u, v) == pytest.approx(1.0)


def test_cosine_errors():
    with pytest.raises(EmbeddingError):
        cosine(np.zeros(3), np.ones(3))
    with pytest.raises(EmbeddingError):
        cosine(np.ones(3), np.ones(4))


# --- remote embedding client -------------------------------------------------------------


class CountingTransport:
    def __init__(self, dims=4, scale=1.0, fail_times=0):
        self.dims = dims
        self.scale = scale
        self.fail_times = fail_times
        self.calls = 0
        self.payloads = []

    def __call__(self, url, payload):
        self.calls += 1
        self.payloads.append(payload)
        if self.fail_times > 0:
            self.fail_times -= 1
            raise ConnectionError("boom")
        data = []
        for text in payload["input"]:
            rng = np.random.default_rng(abs(hash(text)) % 2**32)
            data.append({"embedding": (self.scale * rng.standard_normal(self.dims)).tolist()})
        return {"data": data}


def make_client(tmp_path, transport, **kwargs):
    config = EndpointConfig(base_url="http://mock/embed", model="embedder-x", backoff=0.0, **kwargs)
    return EmbeddingClient(config, cache_dir=str(tmp_path / "cache"), transport=transport)


def test_empty_batch_no_network(tmp_path):
    transport = CountingTransport()
    client = make_client(tmp_path, transport)
    assert client.embed_batch([]) == []
    assert transport.calls == 0


def test_cache_contract_one_network_call(tmp_path):
    transport = CountingTransport()
    client = make_client(tmp_path, transport)
    vecs = client.embed_batch(["hello", "hello", "hello"])
    assert transport.calls == 1
    assert transport.payloads[0]["input"] == ["hello"]
    assert vecs[0].tobytes() == vecs[1].tobytes() == vecs[2].tobytes()
    client.embed_batch(["hello"])
    assert transport.calls == 1


def test_cache_warm_across_clients(tmp_path):
    transport = CountingTransport()
    first = make_client(tmp_path, transport).embed_batch(["some text"])
    transport2 = CountingTransport()
    second_client = make_client(tmp_path, transport2)
    second = second_client.embed_batch(["some text"])
    assert transport2.calls == 0
    assert second_client.cache_hits == 1
    assert np.allclose(first[0], second[0])


def test_non_unit_response_renormalized(tmp_path):
    client = make_client(tmp_path, CountingTransport(scale=7.3))
    vecs = client.embed_batch(["a", "b"])
    for v in vecs:
        assert abs(np.linalg.norm(v) - 1.0) < 1e-6


def test_order_preserving(tmp_path):
    client = make_client(tmp_path, CountingTransport())
    vecs = client.embed_batch(["x", "y", "z"])
    again = client.embed_batch(["z", "y", "x"])
    assert np.allclose(vecs[0], again[2])
    assert np.allclose(vecs[2], again[0])


def test_batch_splitting(tmp_path):
    transport = CountingTransport()
    client = make_client(tmp_path, transport, batch_size=2)
    client.embed_batch([f"t{i}" for i in range(5)])
    assert transport.calls == 3


def test_retry_then_success(tmp_path):
    transport = CountingTransport(fail_times=2)
    client = make_client(tmp_path, transport)
    vecs = client.embed_batch(["q"])
    assert len(vecs) == 1
    assert transport.calls == 3


def test_retry_exhaustion(tmp_path):
    transport = CountingTransport(fail_times=99)
    client = make_client(tmp_path, transport)
    with pytest.raises(RemoteCallError, match="after 3 attempts"):
        client.embed_batch(["q"])


def test_non_finite_rejected(tmp_path):
    def transport(url, payload):
        return {"data": [{"embedding": [float("nan"), 1.0]}]}

    client = make_client(tmp_path, transport)
    with pytest.raises(EmbeddingError, match="non-finite"):
        client.embed_batch(["q"])


def test_dimension_mismatch_rejected(tmp_path):
    def transport(url, payload):
        return {"data": [{"embedding": [1.0, 0.0]}, {"embedding": [1.0, 0.0, 0.0]}]}

    client = make_client(tmp_path, transport)
    with pytest.raises(EmbeddingError, match="imension"):
        client.embed_batch(["a", "b"])


def test_wrong_count_rejected(tmp_path):
    def transport(url, payload):
        return {"data": []}

    client = make_client(tmp_path, transport)
    with pytest.raises(EmbeddingError, match="0 vectors for 1"):
        client.embed_batch(["a"])


def test_role_prefixes(tmp_path):
    transport = CountingTransport()
    client = make_client(tmp_path, transport, query_prefix="query: ", passage_prefix="passage: ")
    client.embed_queries(["alpha"])
    client.embed_passages(["alpha"])
    sent = [payload["input"][0] for payload in transport.payloads]
    assert sent == ["query: alpha", "passage: alpha"]


def test_file_cache_concurrent_writers(tmp_path):
    cache = FileCache(tmp_path / "cc")
    value = {"embedding": [1.0, 2.0]}

    def put_and_get(_):
        cache.put("samekey", value)
        return cache.get("samekey")

    with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(put_and_get, range(32)))
    assert all(r == value for r in results if r is not None)
    assert cache.get("samekey") == value
