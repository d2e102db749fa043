from __future__ import annotations

import json

import yaml
from click.testing import CliRunner

from xlrag.cli import main


def invoke(*args):
    runner = CliRunner()
    result = runner.invoke(main, [str(a) for a in args], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def test_cli_end_to_end(tmp_path):
    pairs = tmp_path / "pairs.jsonl"
    corpus = tmp_path / "corpus.jsonl"
    bench = tmp_path / "benchmark.jsonl"
    index = tmp_path / "index.jsonl"
    retrieved = tmp_path / "retrieved.jsonl"

    invoke("corpus", "synth", "--clusters", 2, "--pairs-per-cluster", 3,
           "--seed", 5, "--out", pairs)
    assert len(pairs.read_text(encoding="utf-8").splitlines()) == 6

    invoke("corpus", "build", "--pairs", pairs, "--seed", 5,
           "--max-words", 20, "--out", corpus)
    assert corpus.exists() and (tmp_path / "corpus.jsonl.meta.json").exists()

    invoke("bench", "generate", "--corpus", corpus, "--n", 6, "--seed", 1,
           "--kind", "travel", "--generator", "template", "--out", bench)
    assert len(bench.read_text(encoding="utf-8").splitlines()) == 6

    invoke("index", "build", "--corpus", corpus, "--embedder", "synthetic",
           "--embed-seed", 3, "--out", index)
    header = json.loads(index.read_text(encoding="utf-8").splitlines()[0])
    assert header["magic"] == "XLRAG-IDX-1"
    assert header["meta"]["embedder"]["kind"] == "synthetic"

    invoke("retrieve", "--index", index, "--benchmark", bench,
           "--policy", "balanced", "--k", 20, "--k-per-lang", 10, "--out", retrieved)
    rows = [json.loads(line) for line in retrieved.read_text(encoding="utf-8").splitlines()]
    assert len(rows) == 6
    assert all(row["policy"] == "balanced" for row in rows)

    config = tmp_path / "run.yaml"
    config.write_text(
        yaml.safe_dump(
            {
                "corpus": "corpus.jsonl",
                "benchmark": "benchmark.jsonl",
                "out_dir": "runs/direct",
                "embedder": {"kind": "synthetic", "seed": 3},
                "policy": {"kind": "direct"},
                "scorer": {"kind": "label_oracle"},
                "generator": {"kind": "mock"},
                "judge": {"kind": "mock"},
                "workers": 1,
            }
        ),
        encoding="utf-8",
    )
    invoke("run", "--config", config)
    results = tmp_path / "runs/direct/results.jsonl"
    assert results.exists()

    invoke("report", "--records", results, "--format", "json",
           "--out-dir", tmp_path / "reports")
    assert (tmp_path / "reports/report.json").exists()
    assert (tmp_path / "reports/report.csv").exists()
    assert (tmp_path / "reports/report.png").exists()

    invoke("evaluate", "--records", results, "--judge", "mock",
           "--out-dir", tmp_path / "eval_out",
           "--corpus", corpus, "--benchmark", bench)
    assert (tmp_path / "eval_out/report.json").exists()
    rejudged = tmp_path / "eval_out/results.jsonl"
    assert rejudged.exists()

    config_b = tmp_path / "run_b.yaml"
    config_b.write_text(config.read_text(encoding="utf-8"), encoding="utf-8")
    invoke("compare", "--configs", f"{config},{config_b}",
           "--out-dir", tmp_path / "cmp")
    assert (tmp_path / "cmp/comparison.csv").exists()
    assert (tmp_path / "cmp/comparison.md").exists()
    assert (tmp_path / "cmp/comparison.png").exists()
