"""Judging, hit metrics, component decomposition, and language-segment reports.

Component metrics follow the conditional cascade: retrieval success rate,
rerank success among retrieval successes, generation accuracy among rerank
successes, and unconditional end-to-end accuracy. Conditional metrics over an
empty conditioning set are reported as undefined (n=0), never as zero.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from math import sqrt
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .generation import Answer, GenerationRequest, answer_judge_template, relevance_judge_template
from .rerank import RerankResult
from .retrieval import Hit, RankedList

Z_95 = 1.96


class EvaluationError(ValueError):
    """Invalid evaluation input."""


class JudgeOutputError(ValueError):
    """Judge output that cannot be parsed into a verdict."""


# --- text normalization and deterministic mock judges ---------------------------------


def normalize_answer_text(text: str) -> str:
    """Unicode-normalized, whitespace-collapsed, case-folded form used by mocks."""
    return re.sub(r"\s+", " ", unicodedata.normalize("NFKC", text)).strip().casefold()


def answer_in_text(gold_answer: str, text: str) -> bool:
    return normalize_answer_text(gold_answer) in normalize_answer_text(text)


def answers_match(gold_answer: str, predicted: str) -> bool:
    return normalize_answer_text(gold_answer) == normalize_answer_text(predicted)


_BRACKET_LIST = re.compile(r"\[\s*(?:\d+\s*(?:,\s*\d+\s*)*)?\]")
_SAME_MEANING = re.compile(r"<same_meaning>\s*(true|false)\s*</same_meaning>", re.IGNORECASE)


def parse_judge_list(text: str) -> set[int]:
    """Extract the first bracketed integer list anywhere in the judge's reply."""
    match = _BRACKET_LIST.search(text)
    if match is None:
        raise JudgeOutputError(f"no bracketed integer list in judge output: {text!r}")
    inner = match.group(0)[1:-1].strip()
    if not inner:
        return set()
    return {int(part) for part in inner.split(",")}


def parse_same_meaning(text: str) -> bool:
    match = _SAME_MEANING.search(text)
    if match is None:
        raise JudgeOutputError(f"no <same_meaning> tag in judge output: {text!r}")
    return match.group(1).casefold() == "true"


class ContainmentRelevanceJudge:
    """Mock relevance judge: a passage is relevant iff it contains the gold answer."""

    source = "mock"

    def judge(self, question: str, gold_answer: str, texts: Sequence[str]) -> set[int]:
        return {i for i, text in enumerate(texts, start=1) if answer_in_text(gold_answer, text)}


class RemoteRelevanceJudge:
    """LLM relevance judge; renders the bracketed-list prompt and parses the reply."""

    source = "remote"

    def __init__(self, chat_client):
        self.chat_client = chat_client

    def judge(self, question: str, gold_answer: str, texts: Sequence[str]) -> set[int]:
        blocks = "\n\n".join(
            f"Passage {i}:\n{text}" for i, text in enumerate(texts, start=1)
        )
        prompt = relevance_judge_template().format(
            question=question, answer=gold_answer, passages=blocks
        )
        reply = self.chat_client.complete(GenerationRequest("", prompt, ""))
        return parse_judge_list(reply)


class EqualityAnswerJudge:
    """Mock answer judge: normalized string equality with the gold answer."""

    source = "mock"

    def judge(self, question: str, gold_answer: str, predicted: str) -> bool:
        return answers_match(gold_answer, predicted)


class RemoteAnswerJudge:
    """LLM answer judge; renders the same_meaning prompt and parses the tag."""

    source = "remote"

    def __init__(self, chat_client):
        self.chat_client = chat_client

    def judge(self, question: str, gold_answer: str, predicted: str) -> bool:
        prompt = answer_judge_template().format(
            question=question, golden_answer=gold_answer, predicted_answer=predicted
        )
        reply = self.chat_client.complete(GenerationRequest("", prompt, ""))
        return parse_same_meaning(reply)


def judge_relevance(question: str, gold_answer: str, texts: Sequence[str], judge) -> set[int]:
    """1-based ranks of relevant passages; out-of-range judge indices are rejected here."""
    ranks = judge.judge(question, gold_answer, texts)
    return {r for r in ranks if 1 <= r <= len(texts)}


def judge_answer(question: str, gold_answer: str, predicted: str, judge) -> bool:
    return bool(judge.judge(question, gold_answer, predicted))


# --- metrics ---------------------------------------------------------------------------


def hits_at_k(relevant_ranks: Iterable[int], k: int) -> int:
    ranks = set(relevant_ranks)
    return 1 if ranks and min(ranks) <= k else 0


def wald_ci(p: float, n: int) -> float:
    """95% normal-approximation half-width: 1.96 * sqrt(p(1-p)/n)."""
    if n < 1:
        raise EvaluationError(f"n must be >= 1, got {n}")
    if not 0.0 <= p <= 1.0:
        raise EvaluationError(f"p must lie in [0, 1], got {p}")
    return Z_95 * sqrt(p * (1.0 - p) / n)


@dataclass(frozen=True)
class MetricValue:
    """A proportion with its sample count and 95% CI half-width; n=0 means undefined."""

    p: float | None
    n: int
    ci_half_width: float | None

    @classmethod
    def from_successes(cls, successes: int, n: int) -> "MetricValue":
        if n == 0:
            return cls.undefined()
        p = successes / n
        return cls(p=p, n=n, ci_half_width=wald_ci(p, n))

    @classmethod
    def undefined(cls) -> "MetricValue":
        return cls(p=None, n=0, ci_half_width=None)

    @property
    def defined(self) -> bool:
        return self.n > 0 and self.p is not None

    def display(self) -> str:
        if not self.defined:
            return "—"
        return f"{self.p * 100:.0f}±{self.ci_half_width * 100:.0f}%"

    def to_dict(self) -> dict:
        return {"p": self.p, "n": self.n, "ci_half_width": self.ci_half_width}


def _mean_of_cells(values: Sequence[MetricValue]) -> MetricValue:
    """Unweighted mean of defined cell values; CI recomputed at the pooled count."""
    defined = [v for v in values if v.defined]
    if not defined:
        return MetricValue.undefined()
    p = sum(v.p for v in defined) / len(defined)
    n = sum(v.n for v in defined)
    return MetricValue(p=p, n=n, ci_half_width=wald_ci(p, n))


# --- per-query records -----------------------------------------------------------------


@dataclass
class StageRecord:
    """Full per-query trace through retrieve -> rerank -> generate -> judge."""

    item_id: str
    user_language: str
    gold_doc_language: str
    retrieved: RankedList
    relevant_in_retrieved: set[int]
    reranked: RerankResult
    relevant_in_kept: set[int]
    answer: Answer
    answer_correct: bool
    hit20: int
    hit5: int
    answer_language_ok: bool | None = None  # optional diagnostic, not a metric

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "user_language": self.user_language,
            "gold_doc_language": self.gold_doc_language,
            "policy": self.retrieved.policy,
            "retrieved": [
                {"passage_id": h.passage_id, "language": h.language, "score": round(h.score, 6)}
                for h in self.retrieved.hits
            ],
            "relevant_in_retrieved": sorted(self.relevant_in_retrieved),
            "kept": [[pid, round(score, 6)] for pid, score in self.reranked.kept],
            "dropped": [[pid, round(score, 6)] for pid, score in self.reranked.dropped],
            "relevant_in_kept": sorted(self.relevant_in_kept),
            "answer": {"text": self.answer.text, "source": self.answer.source},
            "answer_correct": self.answer_correct,
            "hit20": self.hit20,
            "hit5": self.hit5,
            **(
                {"answer_language_ok": self.answer_language_ok}
                if self.answer_language_ok is not None
                else {}
            ),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "StageRecord":
        retrieved = RankedList(
            query_id=data["item_id"],
            policy=data.get("policy", "direct"),
            hits=tuple(
                Hit(h["passage_id"], h["language"], float(h["score"])) for h in data["retrieved"]
            ),
        )
        reranked = RerankResult(
            kept=tuple((pid, float(score)) for pid, score in data["kept"]),
            dropped=tuple((pid, float(score)) for pid, score in data["dropped"]),
        )
        answer = Answer(
            text=data["answer"]["text"],
            item_id=data["item_id"],
            source=data["answer"]["source"],
        )
        return cls(
            item_id=data["item_id"],
            user_language=data["user_language"],
            gold_doc_language=data["gold_doc_language"],
            retrieved=retrieved,
            relevant_in_retrieved=set(data["relevant_in_retrieved"]),
            reranked=reranked,
            relevant_in_kept=set(data["relevant_in_kept"]),
            answer=answer,
            answer_correct=bool(data["answer_correct"]),
            hit20=int(data["hit20"]),
            hit5=int(data["hit5"]),
            answer_language_ok=data.get("answer_language_ok"),
        )


def save_records(records: Sequence[StageRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=lambda r: r.item_id)
    with path.open("w", encoding="utf-8") as fh:
        for record in ordered:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def load_records(path: str | Path) -> list[StageRecord]:
    path = Path(path)
    if not path.exists():
        raise EvaluationError(f"records file not found: {path}")
    records = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            records.append(StageRecord.from_dict(json.loads(raw)))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise EvaluationError(f"{path}:{lineno}: malformed record: {exc}") from exc
    return records


# --- component decomposition and segments ----------------------------------------------


@dataclass
class ComponentMetrics:
    retrieval: MetricValue
    rerank_given_retrieval: MetricValue
    generation_given_rerank: MetricValue
    end_to_end: MetricValue
    product_of_conditionals: float | None
    accuracy_by_hit20: dict[int, MetricValue]
    no_rag: MetricValue | None = None

    def to_dict(self) -> dict:
        return {
            "retrieval": self.retrieval.to_dict(),
            "rerank_given_retrieval": self.rerank_given_retrieval.to_dict(),
            "generation_given_rerank": self.generation_given_rerank.to_dict(),
            "end_to_end": self.end_to_end.to_dict(),
            "product_of_conditionals": self.product_of_conditionals,
            "accuracy_by_hit20": {str(k): v.to_dict() for k, v in sorted(self.accuracy_by_hit20.items())},
            "no_rag": self.no_rag.to_dict() if self.no_rag is not None else None,
        }


def compute_component_metrics(
    records: Sequence[StageRecord], no_rag_correct: Sequence[bool] | None = None
) -> ComponentMetrics:
    """Conditional cascade metrics plus accuracy grouped by retrieval outcome."""
    if not records:
        raise EvaluationError("cannot compute metrics over zero records")
    n = len(records)
    retrieval = MetricValue.from_successes(sum(r.hit20 for r in records), n)
    retrieved_ok = [r for r in records if r.hit20 == 1]
    rerank = MetricValue.from_successes(sum(r.hit5 for r in retrieved_ok), len(retrieved_ok))
    reranked_ok = [r for r in records if r.hit5 == 1]
    generation = MetricValue.from_successes(
        sum(r.answer_correct for r in reranked_ok), len(reranked_ok)
    )
    end_to_end = MetricValue.from_successes(sum(r.answer_correct for r in records), n)
    product = None
    if retrieval.defined and rerank.defined and generation.defined:
        product = retrieval.p * rerank.p * generation.p
    by_hit20 = {}
    for value in (0, 1):
        group = [r for r in records if r.hit20 == value]
        by_hit20[value] = MetricValue.from_successes(
            sum(r.answer_correct for r in group), len(group)
        )
    no_rag = None
    if no_rag_correct is not None:
        no_rag = MetricValue.from_successes(sum(bool(x) for x in no_rag_correct), len(no_rag_correct))
    return ComponentMetrics(retrieval, rerank, generation, end_to_end, product, by_hit20, no_rag)


@dataclass
class CellMetrics:
    """Hit and accuracy metrics for one (user language, document language) cell."""

    n: int
    hit20: MetricValue
    hit5: MetricValue
    end_to_end: MetricValue

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "hit20": self.hit20.to_dict(),
            "hit5": self.hit5.to_dict(),
            "end_to_end": self.end_to_end.to_dict(),
        }


def _cell_metrics(records: Sequence[StageRecord]) -> CellMetrics:
    n = len(records)
    return CellMetrics(
        n=n,
        hit20=MetricValue.from_successes(sum(r.hit20 for r in records), n),
        hit5=MetricValue.from_successes(sum(r.hit5 for r in records), n),
        end_to_end=MetricValue.from_successes(sum(r.answer_correct for r in records), n),
    )


def _aggregate_cells(cells: Sequence[CellMetrics], pooled: Sequence[StageRecord], mode: str) -> CellMetrics:
    if mode == "pooled":
        return _cell_metrics(list(pooled))
    return CellMetrics(
        n=sum(c.n for c in cells),
        hit20=_mean_of_cells([c.hit20 for c in cells]),
        hit5=_mean_of_cells([c.hit5 for c in cells]),
        end_to_end=_mean_of_cells([c.end_to_end for c in cells]),
    )


@dataclass
class SegmentReport:
    """Per language-combination metrics with same-/cross-language aggregates."""

    cells: dict[tuple[str, str], CellMetrics]
    same_language: CellMetrics
    cross_language: CellMetrics
    overall: CellMetrics
    components: ComponentMetrics
    aggregate_mode: str = "cells"

    def to_dict(self) -> dict:
        return {
            "cells": {f"{u}->{d}": c.to_dict() for (u, d), c in sorted(self.cells.items())},
            "same_language": self.same_language.to_dict(),
            "cross_language": self.cross_language.to_dict(),
            "overall": self.overall.to_dict(),
            "components": self.components.to_dict(),
            "aggregate_mode": self.aggregate_mode,
        }


def segment_breakdown(
    records: Sequence[StageRecord],
    no_rag_correct: Sequence[bool] | None = None,
    aggregate: str = "cells",
) -> SegmentReport:
    """Group records by (user language, document language) and aggregate.

    `aggregate="cells"` averages the cell values unweighted (the default,
    matching the mean-over-combinations reading); `"pooled"` pools items.
    """
    if aggregate not in ("cells", "pooled"):
        raise EvaluationError(f"unknown aggregate mode {aggregate!r}")
    if not records:
        raise EvaluationError("cannot build a segment report over zero records")
    languages = sorted(
        {r.user_language for r in records} | {r.gold_doc_language for r in records}
    )
    cells: dict[tuple[str, str], CellMetrics] = {}
    groups: dict[tuple[str, str], list[StageRecord]] = {}
    for user in languages:
        for doc in languages:
            groups[(user, doc)] = []
    for r in records:
        groups[(r.user_language, r.gold_doc_language)].append(r)
    for key, group in groups.items():
        cells[key] = _cell_metrics(group)
    same_keys = [k for k in cells if k[0] == k[1]]
    cross_keys = [k for k in cells if k[0] != k[1]]
    same = _aggregate_cells(
        [cells[k] for k in same_keys],
        [r for k in same_keys for r in groups[k]],
        aggregate,
    )
    cross = _aggregate_cells(
        [cells[k] for k in cross_keys],
        [r for k in cross_keys for r in groups[k]],
        aggregate,
    )
    overall = _cell_metrics(records)
    components = compute_component_metrics(records, no_rag_correct)
    return SegmentReport(cells, same, cross, overall, components, aggregate)


# --- report rendering -------------------------------------------------------------------


def render_report_markdown(report: SegmentReport) -> str:
    comp = report.components
    lines = ["# Run report", "", "## Component performance", ""]
    lines.append(
        "| No-RAG | Retrieval Hits@20 | Reranking Hits@5 (cond.) | "
        "Generation acc. (cond.) | End-to-End | Product of conditionals |"
    )
    lines.append("|---|---|---|---|---|---|")
    no_rag = comp.no_rag.display() if comp.no_rag is not None else "—"
    product = f"{comp.product_of_conditionals * 100:.1f}%" if comp.product_of_conditionals is not None else "—"
    lines.append(
        f"| {no_rag} | {comp.retrieval.display()} | {comp.rerank_given_retrieval.display()} "
        f"| {comp.generation_given_rerank.display()} | {comp.end_to_end.display()} | {product} |"
    )
    lines += ["", "## End-to-end accuracy by retrieval outcome", ""]
    lines.append("| Retrieval Hit@20 | End-to-End Accuracy |")
    lines.append("|---|---|")
    for value in (0, 1):
        lines.append(f"| {value} | {comp.accuracy_by_hit20[value].display()} |")
    lines.append(f"| Overall | {comp.end_to_end.display()} |")
    lines += ["", "## Language combinations", ""]
    lines.append("| User Lang. | Doc Lang. | Hits@20 | Hits@5 | End-to-End | n |")
    lines.append("|---|---|---|---|---|---|")
    for (user, doc), cell in sorted(report.cells.items()):
        lines.append(
            f"| {user} | {doc} | {cell.hit20.display()} | {cell.hit5.display()} "
            f"| {cell.end_to_end.display()} | {cell.n} |"
        )
    for label, cell in (
        ("Same-lang.", report.same_language),
        ("Cross-lang.", report.cross_language),
        ("Overall", report.overall),
    ):
        lines.append(
            f"| {label} | | {cell.hit20.display()} | {cell.hit5.display()} "
            f"| {cell.end_to_end.display()} | {cell.n} |"
        )
    lines.append("")
    return "\n".join(lines)


def write_report_json(report: SegmentReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(report.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def write_segment_csv(report: SegmentReport, path: str | Path) -> None:
    """Delimited per-segment metrics: one row per (segment, metric)."""
    import csv

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows: list[tuple[str, str, str, str]] = []
    segments: list[tuple[str, CellMetrics]] = [
        (f"{u}->{d}", cell) for (u, d), cell in sorted(report.cells.items())
    ]
    segments += [
        ("same_language", report.same_language),
        ("cross_language", report.cross_language),
        ("overall", report.overall),
    ]
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "metric", "p", "n", "ci_half_width"])
        for name, cell in segments:
            for metric_name, value in (
                ("hit20", cell.hit20),
                ("hit5", cell.hit5),
                ("end_to_end", cell.end_to_end),
            ):
                writer.writerow(
                    [
                        name,
                        metric_name,
                        "" if value.p is None else f"{value.p:.6f}",
                        value.n,
                        "" if value.ci_half_width is None else f"{value.ci_half_width:.6f}",
                    ]
                )
