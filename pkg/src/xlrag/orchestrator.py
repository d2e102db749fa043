"""Run configuration and end-to-end pipeline wiring.

A run is reproducible from (config file, input artifacts, cache): every
record carries provenance, completed items are skipped on resume, and a
per-item failure is recorded without aborting the run.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import yaml

from .benchmark import BenchmarkItem, load_benchmark
from .corpus import Corpus
from .embedding import EmbeddingClient, EndpointConfig, SyntheticEmbedder, SyntheticEmbedderParams
from .evaluation import (
    ContainmentRelevanceJudge,
    EqualityAnswerJudge,
    MetricValue,
    RemoteAnswerJudge,
    RemoteRelevanceJudge,
    SegmentReport,
    StageRecord,
    answer_in_text,
    hits_at_k,
    judge_answer,
    judge_relevance,
    load_records,
    render_report_markdown,
    save_records,
    segment_breakdown,
    write_report_json,
    write_segment_csv,
)
from .figures import plot_policy_comparison, plot_segment_hit20
from .generation import (
    ChatConfig,
    ParametricMemoryClient,
    RemoteChatClient,
    answer_matches_user_language,
    build_generation_prompt,
    generate_answer,
    make_seeded_memory,
    mock_generate,
    no_rag_answer,
)
from .rerank import (
    CrossEncoderClient,
    CrossEncoderConfig,
    embedding_similarity_scorer,
    label_oracle_scorer,
    rerank,
)
from .retrieval import (
    BALANCED,
    DIRECT,
    ORACLE,
    RankedList,
    VectorIndex,
    retrieve_balanced,
    retrieve_direct,
    retrieve_language_oracle,
)


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


_KNOWN_KEYS = {
    "version", "corpus", "benchmark", "out_dir", "index", "embedder", "policy",
    "k", "top_m", "scorer", "generator", "judge", "no_rag", "seed", "workers",
    "cache_dir", "language_diagnostic",
}


@dataclass
class RunConfig:
    corpus: str
    benchmark: str
    out_dir: str
    index: str | None = None
    embedder: dict = field(default_factory=lambda: {"kind": "synthetic"})
    policy: dict = field(default_factory=lambda: {"kind": DIRECT})
    k: int = 20
    top_m: int = 5
    scorer: dict = field(default_factory=lambda: {"kind": "label_oracle"})
    generator: dict = field(default_factory=lambda: {"kind": "mock"})
    judge: dict = field(default_factory=lambda: {"kind": "mock"})
    no_rag: dict = field(default_factory=lambda: {"enabled": False, "memory_fraction": 0.0})
    seed: int = 0
    workers: int = 8
    cache_dir: str = "cache"
    language_diagnostic: bool = False
    version: int = 1

    def __post_init__(self) -> None:
        if self.policy.get("kind") not in (DIRECT, ORACLE, BALANCED):
            raise ConfigError(f"unknown policy {self.policy.get('kind')!r}")
        if self.k < 1 or self.top_m < 1:
            raise ConfigError("k and top_m must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ConfigError(f"config root must be a mapping: {path}")
        unknown = set(data) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("corpus", "benchmark", "out_dir"):
            if key not in data:
                raise ConfigError(f"config missing required key {key!r}")
        base = path.parent
        config = cls(**data)
        config.corpus = str((base / config.corpus).resolve())
        config.benchmark = str((base / config.benchmark).resolve())
        config.out_dir = str((base / config.out_dir).resolve())
        if config.index:
            config.index = str((base / config.index).resolve())
        if not Path(config.cache_dir).is_absolute():
            config.cache_dir = str((base / config.cache_dir).resolve())
        return config

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "corpus": self.corpus,
            "benchmark": self.benchmark,
            "out_dir": self.out_dir,
            "index": self.index,
            "embedder": self.embedder,
            "policy": self.policy,
            "k": self.k,
            "top_m": self.top_m,
            "scorer": self.scorer,
            "generator": self.generator,
            "judge": self.judge,
            "no_rag": self.no_rag,
            "seed": self.seed,
            "workers": self.workers,
            "cache_dir": self.cache_dir,
            "language_diagnostic": self.language_diagnostic,
        }

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()


def _file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _build(config_cls, data: dict, section: str):
    try:
        return config_cls(**data)
    except TypeError as exc:
        raise ConfigError(f"invalid {section} config: {exc}") from exc


class _Components:
    """Config-resolved pipeline stages plus their remote-call counters."""

    def __init__(self, config: RunConfig, corpus: Corpus, items: Sequence[BenchmarkItem]):
        self.config = config
        self.corpus = corpus
        self.items = items
        self.passages = corpus.passage_lookup()
        self.clients: dict[str, object] = {}

        embedder_cfg = dict(config.embedder)
        kind = embedder_cfg.pop("kind", "synthetic")
        if kind == "synthetic":
            params = SyntheticEmbedderParams.from_dict(embedder_cfg)
            self.embedder = SyntheticEmbedder(params, corpus.clusters, corpus.language_set)
            self.index_meta = {
                "embedder": {"kind": "synthetic", **params.to_dict()},
            }
        elif kind == "remote":
            endpoint = _build(EndpointConfig, embedder_cfg, "embedder")
            client = EmbeddingClient(endpoint, cache_dir=f"{config.cache_dir}/embeddings")
            self.embedder = client
            self.clients["embedding"] = client
            self.index_meta = {"embedder": {"kind": "remote", "model": endpoint.model}}
        else:
            raise ConfigError(f"unknown embedder kind {kind!r}")

        if config.index:
            self.index = VectorIndex.load(config.index)
        else:
            self.index = VectorIndex.build(corpus, self._embed_passages(), self.index_meta)
        self.vectors = self.index.vector_lookup()

        scorer_kind = config.scorer.get("kind", "label_oracle")
        if scorer_kind == "remote":
            scorer_cfg = {k: v for k, v in config.scorer.items() if k != "kind"}
            self.cross_encoder = CrossEncoderClient(
                _build(CrossEncoderConfig, scorer_cfg, "scorer"),
                cache_dir=f"{config.cache_dir}/rerank",
            )
            self.clients["rerank"] = self.cross_encoder
        elif scorer_kind not in ("label_oracle", "embedding"):
            raise ConfigError(f"unknown scorer kind {scorer_kind!r}")
        self.scorer_kind = scorer_kind

        generator_kind = config.generator.get("kind", "mock")
        if generator_kind == "remote":
            gen_cfg = {k: v for k, v in config.generator.items() if k != "kind"}
            self.chat_client = RemoteChatClient(
                _build(ChatConfig, gen_cfg, "generator"),
                cache_dir=f"{config.cache_dir}/generation",
            )
            self.clients["generation"] = self.chat_client
        elif generator_kind != "mock":
            raise ConfigError(f"unknown generator kind {generator_kind!r}")
        self.generator_kind = generator_kind

        judge_kind = config.judge.get("kind", "mock")
        if judge_kind == "mock":
            self.relevance_judge = ContainmentRelevanceJudge()
            self.answer_judge = EqualityAnswerJudge()
        elif judge_kind == "remote":
            judge_cfg = {k: v for k, v in config.judge.items() if k != "kind"}
            judge_client = RemoteChatClient(
                _build(ChatConfig, judge_cfg, "judge"),
                cache_dir=f"{config.cache_dir}/judgments",
            )
            self.clients["judge"] = judge_client
            self.relevance_judge = RemoteRelevanceJudge(judge_client)
            self.answer_judge = RemoteAnswerJudge(judge_client)
        else:
            raise ConfigError(f"unknown judge kind {judge_kind!r}")

        self.has_remote = bool(self.clients)

    def _embed_passages(self) -> dict:
        if isinstance(self.embedder, SyntheticEmbedder):
            return self.embedder.embed_corpus(self.corpus.passages)
        texts = [p.text for p in self.corpus.passages]
        vectors = self.embedder.embed_passages(texts)
        return {p.passage_id: v for p, v in zip(self.corpus.passages, vectors)}

    def embed_query(self, item: BenchmarkItem):
        if isinstance(self.embedder, SyntheticEmbedder):
            return self.embedder.embed_query(item)
        return self.embedder.embed_queries([item.question])[0]

    def retrieve(self, item: BenchmarkItem, query_vec) -> RankedList:
        kind = self.config.policy["kind"]
        if kind == DIRECT:
            return retrieve_direct(self.index, query_vec, self.config.k, query_id=item.item_id)
        if kind == ORACLE:
            return retrieve_language_oracle(
                self.index, query_vec, item.gold_doc_language, self.config.k, query_id=item.item_id
            )
        k_per_language = int(self.config.policy.get("k_per_language", 10))
        return retrieve_balanced(self.index, query_vec, k_per_language, query_id=item.item_id)

    def make_scorer(self, item: BenchmarkItem, query_vec):
        if self.scorer_kind == "label_oracle":
            return label_oracle_scorer(item.gold_pair_id, item.gold_answer, answer_in_text)
        if self.scorer_kind == "embedding":
            return embedding_similarity_scorer(query_vec, self.vectors)
        return self.cross_encoder.as_scorer()

    def generate(self, item: BenchmarkItem, kept_texts: list[str]):
        if self.generator_kind == "mock":
            return mock_generate(
                item, kept_texts, lambda it, text: answer_in_text(it.gold_answer, text)
            )
        request = build_generation_prompt(item.question, kept_texts, item.item_id)
        return generate_answer(request, self.chat_client)

    def counters(self) -> dict:
        return {
            name: {
                "network_calls": getattr(client, "network_calls", 0),
                "cache_hits": getattr(client, "cache_hits", 0),
            }
            for name, client in sorted(self.clients.items())
        }

    def process_item(self, item: BenchmarkItem) -> StageRecord:
        query_vec = self.embed_query(item)
        ranked = self.retrieve(item, query_vec)
        scorer = self.make_scorer(item, query_vec)
        reranked = rerank(item.question, ranked, scorer, self.passages, self.config.top_m)
        retrieved_texts = [self.passages[h.passage_id].text for h in ranked.hits]
        relevant_20 = judge_relevance(
            item.question, item.gold_answer, retrieved_texts, self.relevance_judge
        )
        kept_texts = [self.passages[pid].text for pid in reranked.kept_ids()]
        relevant_5 = judge_relevance(
            item.question, item.gold_answer, kept_texts, self.relevance_judge
        )
        answer = self.generate(item, kept_texts)
        correct = judge_answer(item.question, item.gold_answer, answer.text, self.answer_judge)
        language_ok = None
        if self.config.language_diagnostic:
            language_ok = answer_matches_user_language(answer.text, item.user_language)
        return StageRecord(
            item_id=item.item_id,
            user_language=item.user_language,
            gold_doc_language=item.gold_doc_language,
            retrieved=ranked,
            relevant_in_retrieved=relevant_20,
            reranked=reranked,
            relevant_in_kept=relevant_5,
            answer=answer,
            answer_correct=correct,
            hit20=hits_at_k(relevant_20, self.config.k),
            hit5=hits_at_k(relevant_5, self.config.top_m),
            answer_language_ok=language_ok,
        )


def _no_rag_flags(
    config: RunConfig, components: _Components, records: Sequence[StageRecord]
) -> list[bool] | None:
    settings = config.no_rag or {}
    if not settings.get("enabled", False):
        return None
    items_by_id = {item.item_id: item for item in components.items}
    if settings.get("kind", "mock") == "remote":
        client = components.clients.get("generation")
        if client is None:
            client = RemoteChatClient(
                ChatConfig(**{k: v for k, v in settings.items() if k in ChatConfig.__dataclass_fields__}),
                cache_dir=f"{config.cache_dir}/generation",
            )
            components.clients["no_rag"] = client
    else:
        memory = make_seeded_memory(
            list(components.items), float(settings.get("memory_fraction", 0.0)), config.seed
        )
        client = ParametricMemoryClient(memory)
    flags = []
    for record in records:
        item = items_by_id[record.item_id]
        answer = no_rag_answer(item, client)
        flags.append(
            judge_answer(item.question, item.gold_answer, answer.text, components.answer_judge)
        )
    return flags


def run_pipeline(config: RunConfig) -> list[StageRecord]:
    """Execute retrieve -> rerank -> generate -> judge for every benchmark item."""
    started = time.time()
    corpus = Corpus.load(config.corpus)
    items = load_benchmark(config.benchmark, corpus)
    components = _Components(config, corpus, items)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / "results.jsonl"
    existing: list[StageRecord] = []
    if results_path.exists():
        existing = load_records(results_path)
    done = {r.item_id for r in existing}
    pending = [item for item in items if item.item_id not in done]

    records = list(existing)
    failures: list[dict] = []

    def run_one(item: BenchmarkItem) -> tuple[BenchmarkItem, StageRecord | None, str | None]:
        try:
            return item, components.process_item(item), None
        except Exception as exc:  # failure isolation: record and continue
            return item, None, f"{type(exc).__name__}: {exc}"

    if components.has_remote and config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(run_one, pending))
    else:
        outcomes = [run_one(item) for item in pending]
    for item, record, error in outcomes:
        if record is not None:
            records.append(record)
        else:
            failures.append({"item_id": item.item_id, "error": error})

    records.sort(key=lambda r: r.item_id)
    save_records(records, results_path)
    failures_path = out_dir / "failures.jsonl"
    if failures:
        with failures_path.open("w", encoding="utf-8") as fh:
            for entry in sorted(failures, key=lambda e: e["item_id"]):
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    elif failures_path.exists():
        failures_path.unlink()

    no_rag_correct = _no_rag_flags(config, components, records)
    if records:
        report = segment_breakdown(records, no_rag_correct)
        write_report_json(report, out_dir / "report.json")
        (out_dir / "report.md").write_text(render_report_markdown(report), encoding="utf-8")
        write_segment_csv(report, out_dir / "report.csv")
        plot_segment_hit20(report, out_dir / "report.png")

    meta = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "inputs": {
            "corpus": _file_hash(config.corpus),
            "benchmark": _file_hash(config.benchmark),
            **({"index": _file_hash(config.index)} if config.index else {}),
        },
        "seed": config.seed,
        "n_items": len(items),
        "n_records": len(records),
        "n_failures": len(failures),
        "remote": components.counters(),
        "elapsed_seconds": round(time.time() - started, 3),
    }
    (out_dir / "run_meta.json").write_text(
        json.dumps(meta, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return records


def _segment_order(report: SegmentReport) -> list[str]:
    return [f"{u}->{d}" for (u, d) in sorted(report.cells)] + [
        "same_language",
        "cross_language",
        "overall",
    ]


@dataclass
class PolicyColumn:
    label: str
    policy: str
    results_path: str
    segments: dict[str, MetricValue] | None  # None when the run is missing


def compare_policies(
    config_paths: Sequence[str | Path], out_dir: str | Path
) -> list[PolicyColumn]:
    """Side-by-side per-segment Hits@20 for runs sharing one benchmark.

    Emits a delimited table, a markdown table, and a grouped-bar figure.
    Missing runs appear as explicit gaps, not failures.
    """
    if not config_paths:
        raise ConfigError("compare requires at least one config")
    configs = [RunConfig.from_file(p) for p in config_paths]
    benchmark_hashes = {_file_hash(c.benchmark) for c in configs}
    if len(benchmark_hashes) > 1:
        raise ConfigError("configs do not share the same benchmark")

    columns: list[PolicyColumn] = []
    segment_order: list[str] | None = None
    for path, config in zip(config_paths, configs):
        label = f"{Path(path).stem}:{config.policy['kind']}"
        results_path = Path(config.out_dir) / "results.jsonl"
        if not results_path.exists():
            columns.append(PolicyColumn(label, config.policy["kind"], str(results_path), None))
            continue
        report = segment_breakdown(load_records(results_path))
        segments = {f"{u}->{d}": cell.hit20 for (u, d), cell in report.cells.items()}
        segments["same_language"] = report.same_language.hit20
        segments["cross_language"] = report.cross_language.hit20
        segments["overall"] = report.overall.hit20
        if segment_order is None:
            segment_order = _segment_order(report)
        columns.append(PolicyColumn(label, config.policy["kind"], str(results_path), segments))
    if segment_order is None:
        segment_order = []

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    import csv

    with (out_dir / "comparison.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "policy", "segment", "p", "n", "ci_half_width"])
        for column in columns:
            for segment in segment_order:
                value = column.segments.get(segment) if column.segments else None
                writer.writerow(
                    [
                        column.label,
                        column.policy,
                        segment,
                        "" if value is None or value.p is None else f"{value.p:.6f}",
                        "" if value is None else value.n,
                        ""
                        if value is None or value.ci_half_width is None
                        else f"{value.ci_half_width:.6f}",
                    ]
                )

    lines = ["# Policy comparison (Hits@20)", ""]
    lines.append("| Segment | " + " | ".join(c.label for c in columns) + " |")
    lines.append("|---" * (len(columns) + 1) + "|")
    for segment in segment_order:
        cells = []
        for column in columns:
            if column.segments is None:
                cells.append("(missing run)")
            else:
                cells.append(column.segments[segment].display())
        lines.append(f"| {segment} | " + " | ".join(cells) + " |")
    lines.append("")
    (out_dir / "comparison.md").write_text("\n".join(lines), encoding="utf-8")

    plot_policy_comparison(
        [(c.label, c.segments) for c in columns], segment_order, out_dir / "comparison.png"
    )
    return columns
