from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml

from xlrag.benchmark import TemplateQAGenerator, generate_benchmark, save_benchmark
from xlrag.orchestrator import ConfigError, RunConfig, compare_policies, run_pipeline

from conftest import make_corpus


def write_workspace(root: Path, *, n_items=8, corpus_seed=5, bench_seed=1) -> dict:
    corpus = make_corpus(n_clusters=2, pairs_per_cluster=4, seed=corpus_seed)
    corpus_path = root / "corpus.jsonl"
    corpus.save(corpus_path)
    items = generate_benchmark(corpus, n_items, seed=bench_seed, generator=TemplateQAGenerator())
    benchmark_path = root / "benchmark.jsonl"
    save_benchmark(items, benchmark_path)
    return {"corpus": corpus_path, "benchmark": benchmark_path, "items": items}


def write_config(root: Path, name: str, out_dir: str, *, policy="direct", **overrides) -> Path:
    data = {
        "corpus": "corpus.jsonl",
        "benchmark": "benchmark.jsonl",
        "out_dir": out_dir,
        "embedder": {"kind": "synthetic", "seed": 3},
        "policy": {"kind": policy},
        "scorer": {"kind": "label_oracle"},
        "generator": {"kind": "mock"},
        "judge": {"kind": "mock"},
        "seed": 7,
        "workers": 1,
    }
    data.update(overrides)
    path = root / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


@pytest.fixture()
def workspace(tmp_path):
    return tmp_path, write_workspace(tmp_path)


def test_run_produces_records_and_reports(workspace):
    root, ws = workspace
    config = RunConfig.from_file(write_config(root, "run.yaml", "runs/a"))
    records = run_pipeline(config)
    assert len(records) == len(ws["items"])
    out = Path(config.out_dir)
    for name in ("results.jsonl", "report.json", "report.md", "report.csv", "report.png", "run_meta.json"):
        assert (out / name).exists(), name
    meta = json.loads((out / "run_meta.json").read_text(encoding="utf-8"))
    assert meta["n_failures"] == 0
    assert meta["remote"] == {}  # all-mock run performs zero network calls
    assert meta["config_hash"] == config.config_hash()
    assert set(meta["inputs"]) == {"corpus", "benchmark"}


def test_run_byte_stable_across_executions(workspace):
    root, _ = workspace
    config_a = RunConfig.from_file(write_config(root, "a.yaml", "runs/a"))
    config_b = RunConfig.from_file(write_config(root, "b.yaml", "runs/b"))
    run_pipeline(config_a)
    run_pipeline(config_b)
    for name in ("results.jsonl", "report.json"):
        assert (Path(config_a.out_dir) / name).read_bytes() == (
            Path(config_b.out_dir) / name
        ).read_bytes()


def test_oracle_policy_propagates_gold_language(workspace):
    root, ws = workspace
    config = RunConfig.from_file(write_config(root, "oracle.yaml", "runs/oracle", policy="oracle"))
    records = run_pipeline(config)
    gold = {item.item_id: item.gold_doc_language for item in ws["items"]}
    for record in records:
        assert all(h.language == gold[record.item_id] for h in record.retrieved.hits)


def test_interrupted_run_resumes_to_identical_bytes(workspace):
    root, _ = workspace
    full_config = RunConfig.from_file(write_config(root, "full.yaml", "runs/full"))
    run_pipeline(full_config)
    full_results = (Path(full_config.out_dir) / "results.jsonl").read_bytes()

    resumed_config = RunConfig.from_file(write_config(root, "resumed.yaml", "runs/resumed"))
    partial_dir = Path(resumed_config.out_dir)
    partial_dir.mkdir(parents=True)
    partial_lines = full_results.decode("utf-8").splitlines()[:2]
    (partial_dir / "results.jsonl").write_text(
        "\n".join(partial_lines) + "\n", encoding="utf-8"
    )
    run_pipeline(resumed_config)
    assert (partial_dir / "results.jsonl").read_bytes() == full_results
    assert (partial_dir / "report.json").read_bytes() == (
        Path(full_config.out_dir) / "report.json"
    ).read_bytes()


def test_resume_skips_completed_items(workspace):
    root, ws = workspace
    config = RunConfig.from_file(write_config(root, "skip.yaml", "runs/skip"))
    first = run_pipeline(config)
    results_path = Path(config.out_dir) / "results.jsonl"
    before = results_path.read_bytes()
    second = run_pipeline(config)  # nothing pending
    assert results_path.read_bytes() == before
    assert len(first) == len(second) == len(ws["items"])


def test_per_item_failure_recorded_not_fatal(workspace):
    root, ws = workspace
    # poison one item with a language the embedder does not know; only that
    # item's query embedding can fail, so the failure is strictly per-item
    benchmark_path = root / "benchmark.jsonl"
    records_raw = [json.loads(line) for line in benchmark_path.read_text("utf-8").splitlines()]
    victim = records_raw[0]["item_id"]
    records_raw[0]["user_language"] = "fr"
    records_raw[0]["category"]["user_language"] = "fr"
    with benchmark_path.open("w", encoding="utf-8") as fh:
        for rec in records_raw:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    config = RunConfig.from_file(write_config(root, "fail.yaml", "runs/fail"))
    records = run_pipeline(config)
    assert len(records) == len(ws["items"]) - 1
    assert victim not in {r.item_id for r in records}
    failures = [
        json.loads(line)
        for line in (Path(config.out_dir) / "failures.jsonl").read_text(encoding="utf-8").splitlines()
    ]
    assert [f["item_id"] for f in failures] == [victim]
    assert "language" in failures[0]["error"]
    meta_json = json.loads((Path(config.out_dir) / "run_meta.json").read_text(encoding="utf-8"))
    assert meta_json["n_failures"] == 1


def test_no_rag_baseline_fraction(workspace):
    root, ws = workspace
    config = RunConfig.from_file(
        write_config(
            root,
            "norag.yaml",
            "runs/norag",
            no_rag={"enabled": True, "memory_fraction": 0.25},
        )
    )
    run_pipeline(config)
    report = json.loads((Path(config.out_dir) / "report.json").read_text(encoding="utf-8"))
    assert report["components"]["no_rag"]["p"] == pytest.approx(0.25)
    assert report["components"]["no_rag"]["n"] == len(ws["items"])


def test_balanced_policy_runs(workspace):
    root, _ = workspace
    path = write_config(root, "bal.yaml", "runs/bal")
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    data["policy"] = {"kind": "balanced", "k_per_language": 5}
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    records = run_pipeline(RunConfig.from_file(path))
    assert all(len(r.retrieved.hits) == 10 for r in records)


def test_config_validation(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"corpus": "c", "benchmark": "b"}), encoding="utf-8")
    with pytest.raises(ConfigError, match="out_dir"):
        RunConfig.from_file(path)
    path.write_text(
        yaml.safe_dump({"corpus": "c", "benchmark": "b", "out_dir": "o", "typo_key": 1}),
        encoding="utf-8",
    )
    with pytest.raises(ConfigError, match="typo_key"):
        RunConfig.from_file(path)
    path.write_text(
        yaml.safe_dump(
            {"corpus": "c", "benchmark": "b", "out_dir": "o", "policy": {"kind": "best"}}
        ),
        encoding="utf-8",
    )
    with pytest.raises(ConfigError, match="policy"):
        RunConfig.from_file(path)
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.from_file(tmp_path / "absent.yaml")


def test_compare_identical_configs_and_missing_run(workspace):
    root, _ = workspace
    config_a = write_config(root, "cmp_a.yaml", "runs/cmp")
    config_b = write_config(root, "cmp_b.yaml", "runs/cmp")  # same run twice
    config_c = write_config(root, "cmp_c.yaml", "runs/never_ran", policy="balanced")
    run_pipeline(RunConfig.from_file(config_a))
    columns = compare_policies([config_a, config_b, config_c], root / "cmp_out")
    assert columns[0].segments == columns[1].segments
    assert columns[2].segments is None
    out = root / "cmp_out"
    assert (out / "comparison.csv").exists()
    assert (out / "comparison.png").exists()
    md = (out / "comparison.md").read_text(encoding="utf-8")
    assert "(missing run)" in md
    csv_lines = (out / "comparison.csv").read_text(encoding="utf-8").splitlines()
    assert csv_lines[0] == "config,policy,segment,p,n,ci_half_width"


def test_language_diagnostic_flag(workspace):
    root, _ = workspace
    config = RunConfig.from_file(
        write_config(root, "diag.yaml", "runs/diag", language_diagnostic=True)
    )
    records = run_pipeline(config)
    # mock answers are latin code tokens, so the flag is set for every record
    assert all(r.answer_language_ok is not None for r in records)
    raw = (Path(config.out_dir) / "results.jsonl").read_text(encoding="utf-8")
    assert "answer_language_ok" in raw


class HashEmbedTransport:
    """Deterministic stand-in for a remote embedding endpoint."""

    def __init__(self):
        self.calls = 0

    def __call__(self, url, payload):
        import hashlib

        import numpy as np

        self.calls += 1
        data = []
        for text in payload["input"]:
            seed = int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big")
            vec = np.random.default_rng(seed).standard_normal(32)
            data.append({"embedding": vec.tolist()})
        return {"data": data}


def test_remote_run_warm_cache_zero_network(workspace, monkeypatch):
    root, ws = workspace
    transports = []

    def fake_transport(timeout=30.0, api_key_env="XLRAG_API_KEY"):
        transport = HashEmbedTransport()
        transports.append(transport)
        return transport

    monkeypatch.setattr("xlrag.embedding.default_transport", fake_transport)
    overrides = {
        "embedder": {"kind": "remote", "base_url": "http://mock/embed",
                     "model": "embedder-x", "batch_size": 64},
        "cache_dir": "cache",
    }
    cold = RunConfig.from_file(write_config(root, "remote_a.yaml", "runs/remote_a", **overrides))
    run_pipeline(cold)
    meta_cold = json.loads((Path(cold.out_dir) / "run_meta.json").read_text(encoding="utf-8"))
    assert meta_cold["remote"]["embedding"]["network_calls"] > 0

    warm = RunConfig.from_file(write_config(root, "remote_b.yaml", "runs/remote_b", **overrides))
    run_pipeline(warm)
    meta_warm = json.loads((Path(warm.out_dir) / "run_meta.json").read_text(encoding="utf-8"))
    assert meta_warm["remote"]["embedding"]["network_calls"] == 0
    assert meta_warm["remote"]["embedding"]["cache_hits"] > 0
    assert (Path(cold.out_dir) / "results.jsonl").read_bytes() == (
        Path(warm.out_dir) / "results.jsonl"
    ).read_bytes()


def test_compare_rejects_mismatched_benchmarks(workspace, tmp_path):
    root, ws = workspace
    other_items = generate_benchmark(
        make_corpus(n_clusters=2, pairs_per_cluster=4, seed=5), 4, seed=99,
        generator=TemplateQAGenerator(),
    )
    save_benchmark(other_items, root / "other_benchmark.jsonl")
    config_a = write_config(root, "m1.yaml", "runs/m1")
    config_b = write_config(root, "m2.yaml", "runs/m2", benchmark="other_benchmark.jsonl")
    with pytest.raises(ConfigError, match="benchmark"):
        compare_policies([config_a, config_b], root / "cmp")
