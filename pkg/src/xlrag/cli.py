"""Command-line entry points: corpus/bench/index building, retrieval, runs, reports."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .benchmark import RemoteQAGenerator, TemplateQAGenerator, generate_benchmark, load_benchmark, save_benchmark
from .corpus import (
    Corpus,
    SyntheticCorpusParams,
    assign_document_languages,
    build_corpus,
    generate_synthetic_corpus,
    load_parallel_documents,
    save_parallel_documents,
)
from .embedding import EmbeddingClient, EndpointConfig, SyntheticEmbedder, SyntheticEmbedderParams
from .evaluation import (
    ContainmentRelevanceJudge,
    EqualityAnswerJudge,
    RemoteAnswerJudge,
    RemoteRelevanceJudge,
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
from .figures import plot_segment_hit20
from .generation import ChatConfig, RemoteChatClient
from .orchestrator import RunConfig, compare_policies, run_pipeline
from .retrieval import VectorIndex, retrieve_balanced, retrieve_direct, retrieve_language_oracle


@click.group()
def main() -> None:
    """Bilingual RAG pipeline over a language-partitioned dense index."""


@main.group()
def corpus() -> None:
    """Build or synthesize a bilingual corpus."""


@corpus.command("build")
@click.option("--pairs", required=True, type=click.Path(exists=True), help="pairs.jsonl input")
@click.option("--seed", required=True, type=int, help="language-assignment seed")
@click.option("--max-words", default=300, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
def corpus_build(pairs: str, seed: int, max_words: int, out: str) -> None:
    documents = load_parallel_documents(pairs)
    assignment = assign_document_languages(documents, seed)
    built = build_corpus(documents, assignment, max_words, seed=seed)
    built.save(out)
    by_language = {
        lang: sum(1 for p in built.passages if p.language == lang)
        for lang in built.language_set
    }
    click.echo(f"wrote {len(built.passages)} passages for {len(documents)} pairs to {out}")
    click.echo(f"passages per language: {by_language}")


@corpus.command("synth")
@click.option("--clusters", required=True, type=int)
@click.option("--pairs-per-cluster", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True, type=click.Path())
@click.option("--similarity", default=0.9, show_default=True, type=float,
              help="intra-cluster topic similarity target")
@click.option("--paragraphs", default=6, show_default=True, type=int)
def corpus_synth(clusters: int, pairs_per_cluster: int, seed: int, out: str,
                 similarity: float, paragraphs: int) -> None:
    params = SyntheticCorpusParams(
        n_clusters=clusters,
        pairs_per_cluster=pairs_per_cluster,
        paragraphs_per_pair=paragraphs,
        topic_similarity=similarity,
    )
    documents = generate_synthetic_corpus(params, seed)
    save_parallel_documents(documents, out)
    click.echo(f"wrote {len(documents)} synthetic pairs ({clusters} clusters) to {out}")


@main.group()
def bench() -> None:
    """Generate benchmarks over a corpus."""


@bench.command("generate")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--n", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--kind", default="legal", show_default=True,
              type=click.Choice(["legal", "travel"]))
@click.option("--generator", "generator_kind", default="template", show_default=True,
              type=click.Choice(["template", "remote"]))
@click.option("--base-url", default=None, help="chat endpoint (remote generator)")
@click.option("--model", default=None, help="chat model (remote generator)")
@click.option("--out", required=True, type=click.Path())
def bench_generate(corpus_path: str, n: int, seed: int, kind: str,
                   generator_kind: str, base_url: str | None, model: str | None, out: str) -> None:
    loaded = Corpus.load(corpus_path)
    if generator_kind == "template":
        generator = TemplateQAGenerator()
    else:
        if not base_url or not model:
            raise click.UsageError("--base-url and --model are required for the remote generator")
        generator = RemoteQAGenerator(RemoteChatClient(ChatConfig(base_url=base_url, model=model)))
    items = generate_benchmark(loaded, n, seed, generator, kind)
    save_benchmark(items, out)
    click.echo(f"wrote {len(items)} benchmark items to {out}")


@main.group()
def index() -> None:
    """Build dense indexes."""


@index.command("build")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--embedder", "embedder_kind", default="synthetic", show_default=True,
              type=click.Choice(["synthetic", "remote"]))
@click.option("--out", required=True, type=click.Path())
@click.option("--dims", default=256, show_default=True, type=int)
@click.option("--embed-seed", default=0, show_default=True, type=int)
@click.option("--alpha", default=1.0, show_default=True, type=float)
@click.option("--beta", default=0.35, show_default=True, type=float)
@click.option("--gamma", default=0.15, show_default=True, type=float)
@click.option("--base-url", default=None, help="embedding endpoint (remote embedder)")
@click.option("--model", default=None, help="embedding model (remote embedder)")
def index_build(corpus_path: str, embedder_kind: str, out: str, dims: int, embed_seed: int,
                alpha: float, beta: float, gamma: float,
                base_url: str | None, model: str | None) -> None:
    loaded = Corpus.load(corpus_path)
    if embedder_kind == "synthetic":
        params = SyntheticEmbedderParams(
            dims=dims, alpha=alpha, beta=beta, gamma=gamma, seed=embed_seed
        )
        embedder = SyntheticEmbedder(params, loaded.clusters, loaded.language_set)
        embeddings = embedder.embed_corpus(loaded.passages)
        meta = {
            "embedder": {"kind": "synthetic", **params.to_dict()},
            "clusters": {
                pid: {"cluster_id": c.cluster_id, "topic_similarity": c.topic_similarity}
                for pid, c in sorted(loaded.clusters.items())
            },
        }
    else:
        if not base_url or not model:
            raise click.UsageError("--base-url and --model are required for the remote embedder")
        client = EmbeddingClient(EndpointConfig(base_url=base_url, model=model))
        vectors = client.embed_passages([p.text for p in loaded.passages])
        embeddings = {p.passage_id: v for p, v in zip(loaded.passages, vectors)}
        meta = {"embedder": {"kind": "remote", "model": model}}
    built = VectorIndex.build(loaded, embeddings, meta)
    built.save(out)
    click.echo(f"indexed {len(built)} passages (dims={built.dims}) to {out}")


@main.command("retrieve")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--benchmark", "benchmark_path", required=True, type=click.Path(exists=True))
@click.option("--policy", default="direct", show_default=True,
              type=click.Choice(["direct", "oracle", "balanced"]))
@click.option("--k", default=20, show_default=True, type=int)
@click.option("--k-per-lang", default=10, show_default=True, type=int)
@click.option("--base-url", default=None, help="embedding endpoint (remote-embedder indexes)")
@click.option("--model", default=None, help="embedding model (remote-embedder indexes)")
@click.option("--out", required=True, type=click.Path())
def retrieve(index_path: str, benchmark_path: str, policy: str, k: int, k_per_lang: int,
             base_url: str | None, model: str | None, out: str) -> None:
    """Run one retrieval policy over a benchmark and write ranked lists."""
    from .corpus import ClusterInfo

    loaded_index = VectorIndex.load(index_path)
    items = load_benchmark(benchmark_path)
    embedder_meta = (loaded_index.meta or {}).get("embedder", {})
    if embedder_meta.get("kind") == "synthetic":
        clusters = {
            pid: ClusterInfo(int(c["cluster_id"]), float(c["topic_similarity"]))
            for pid, c in (loaded_index.meta.get("clusters") or {}).items()
        }
        params = SyntheticEmbedderParams.from_dict(embedder_meta)
        embedder = SyntheticEmbedder(params, clusters, loaded_index.language_set)
        query_vecs = [embedder.embed_query(item) for item in items]
    else:
        if not base_url or not model:
            raise click.UsageError(
                "--base-url and --model are required to embed queries for this index"
            )
        client = EmbeddingClient(EndpointConfig(base_url=base_url, model=model))
        query_vecs = client.embed_queries([item.question for item in items])
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as fh:
        for item, qv in zip(items, query_vecs):
            if policy == "direct":
                ranked = retrieve_direct(loaded_index, qv, k, query_id=item.item_id)
            elif policy == "oracle":
                ranked = retrieve_language_oracle(
                    loaded_index, qv, item.gold_doc_language, k, query_id=item.item_id
                )
            else:
                ranked = retrieve_balanced(loaded_index, qv, k_per_lang, query_id=item.item_id)
            fh.write(
                json.dumps(
                    {
                        "query_id": ranked.query_id,
                        "policy": ranked.policy,
                        "hits": [
                            {"passage_id": h.passage_id, "language": h.language,
                             "score": round(h.score, 6)}
                            for h in ranked.hits
                        ],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    click.echo(f"wrote {len(items)} ranked lists to {out}")


def _write_report_files(records, out_dir: Path, fmt: str | None = None) -> None:
    report = segment_breakdown(records)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt in (None, "json"):
        write_report_json(report, out_dir / "report.json")
    if fmt in (None, "md"):
        (out_dir / "report.md").write_text(render_report_markdown(report), encoding="utf-8")
    write_segment_csv(report, out_dir / "report.csv")
    plot_segment_hit20(report, out_dir / "report.png")


@main.command("evaluate")
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--judge", "judge_kind", default="mock", show_default=True,
              type=click.Choice(["mock", "remote"]))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", default=None, type=click.Path(exists=True),
              help="re-judge relevance/answers against this corpus")
@click.option("--benchmark", "benchmark_path", default=None, type=click.Path(exists=True))
@click.option("--base-url", default=None, help="judge endpoint (remote judge)")
@click.option("--model", default=None, help="judge model (remote judge)")
def evaluate(records_path: str, judge_kind: str, out_dir: str,
             corpus_path: str | None, benchmark_path: str | None,
             base_url: str | None, model: str | None) -> None:
    """Aggregate records into reports; optionally re-judge against a corpus."""
    records = load_records(records_path)
    if corpus_path and benchmark_path:
        loaded = Corpus.load(corpus_path)
        passages = loaded.passage_lookup()
        items = {item.item_id: item for item in load_benchmark(benchmark_path, loaded)}
        if judge_kind == "remote":
            if not base_url or not model:
                raise click.UsageError("--base-url and --model are required for the remote judge")
            judge_client = RemoteChatClient(
                ChatConfig(base_url=base_url, model=model), cache_dir="cache/judgments"
            )
            relevance_judge = RemoteRelevanceJudge(judge_client)
            answer_judge = RemoteAnswerJudge(judge_client)
        else:
            relevance_judge = ContainmentRelevanceJudge()
            answer_judge = EqualityAnswerJudge()
        for record in records:
            item = items[record.item_id]
            texts20 = [passages[h.passage_id].text for h in record.retrieved.hits]
            kept_texts = [passages[pid].text for pid, _ in record.reranked.kept]
            record.relevant_in_retrieved = judge_relevance(
                item.question, item.gold_answer, texts20, relevance_judge
            )
            record.relevant_in_kept = judge_relevance(
                item.question, item.gold_answer, kept_texts, relevance_judge
            )
            record.hit20 = hits_at_k(record.relevant_in_retrieved, len(texts20) or 1)
            record.hit5 = hits_at_k(record.relevant_in_kept, len(kept_texts) or 1)
            record.answer_correct = judge_answer(
                item.question, item.gold_answer, record.answer.text, answer_judge
            )
        save_records(records, Path(out_dir) / "results.jsonl")
    _write_report_files(records, Path(out_dir))
    click.echo(f"evaluated {len(records)} records into {out_dir}")


@main.command("report")
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="md", show_default=True,
              type=click.Choice(["md", "json"]))
@click.option("--out-dir", default=None, type=click.Path(),
              help="defaults to the records file's directory")
def report(records_path: str, fmt: str, out_dir: str | None) -> None:
    """Render report tables, the delimited segment file, and the Hits@20 figure."""
    records = load_records(records_path)
    target = Path(out_dir) if out_dir else Path(records_path).parent
    _write_report_files(records, target, fmt)
    click.echo(f"wrote report.{fmt}, report.csv, report.png to {target}")


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def run(config_path: str) -> None:
    """Execute a full pipeline run from a config file."""
    config = RunConfig.from_file(config_path)
    records = run_pipeline(config)
    click.echo(f"run complete: {len(records)} records in {config.out_dir}")


@main.command("compare")
@click.option("--configs", required=True, help="comma-separated run config paths")
@click.option("--out-dir", required=True, type=click.Path())
def compare(configs: str, out_dir: str) -> None:
    """Compare per-segment Hits@20 across runs sharing a benchmark."""
    paths = [p.strip() for p in configs.split(",") if p.strip()]
    columns = compare_policies(paths, out_dir)
    present = sum(1 for c in columns if c.segments is not None)
    click.echo(f"compared {present}/{len(columns)} runs into {out_dir}")


if __name__ == "__main__":
    main()
