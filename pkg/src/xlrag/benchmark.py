"""Benchmark synthesis: category profiles and QA pairs over a built corpus.

User language is drawn uniformly and independently of the gold document's
language, so the benchmark populates all four language combinations evenly in
expectation. The template generator is pure: (corpus, seed, n) fully determine
its output.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, Language
from .generation import GenerationRequest

BENCHMARK_KINDS = ("legal", "travel")

LANGUAGE_WEIGHTS: tuple[tuple[str, float], ...] = (("ar", 0.5), ("en", 0.5))
FORMULATION_WEIGHTS: tuple[tuple[str, float], ...] = (
    ("concise-NL", 0.40),
    ("verbose-NL", 0.20),
    ("short-search", 0.25),
    ("long-search", 0.15),
)
SIMILARITY_WEIGHTS: tuple[tuple[str, float], ...] = (("similar", 0.5), ("distant", 0.5))
QUESTION_TYPE_WEIGHTS: tuple[tuple[str, float], ...] = (("factoid", 0.5), ("open-ended", 0.5))
USER_NEED_WEIGHTS: dict[str, tuple[tuple[str, float], ...]] = {
    "legal": (("advice", 0.5), ("curiosity", 0.5)),
    "travel": (("uae-user", 0.2), ("non-uae-user", 0.3), ("undisclosed", 0.5)),
}


class BenchmarkError(ValueError):
    """Invalid benchmark input or a violated benchmark invariant."""


def category_schema(benchmark_kind: str) -> dict[str, tuple[tuple[str, float], ...]]:
    """The independent categorizations and their sampling probabilities."""
    if benchmark_kind not in BENCHMARK_KINDS:
        raise BenchmarkError(f"unknown benchmark kind {benchmark_kind!r}")
    return {
        "user_language": LANGUAGE_WEIGHTS,
        "formulation": FORMULATION_WEIGHTS,
        "linguistic_similarity": SIMILARITY_WEIGHTS,
        "question_type": QUESTION_TYPE_WEIGHTS,
        "user_need": USER_NEED_WEIGHTS[benchmark_kind],
    }


@dataclass(frozen=True)
class CategoryProfile:
    user_language: Language
    formulation: str
    linguistic_similarity: str
    question_type: str
    user_need: str

    def to_dict(self) -> dict:
        return {
            "user_language": self.user_language,
            "formulation": self.formulation,
            "linguistic_similarity": self.linguistic_similarity,
            "question_type": self.question_type,
            "user_need": self.user_need,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CategoryProfile":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class BenchmarkItem:
    item_id: str
    question: str
    gold_answer: str
    user_language: Language
    gold_pair_id: str
    gold_doc_language: Language
    category: CategoryProfile

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "question": self.question,
            "answer": self.gold_answer,
            "user_language": self.user_language,
            "gold_pair_id": self.gold_pair_id,
            "gold_doc_language": self.gold_doc_language,
            "category": self.category.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BenchmarkItem":
        return cls(
            item_id=data["item_id"],
            question=data["question"],
            gold_answer=data["answer"],
            user_language=data["user_language"],
            gold_pair_id=data["gold_pair_id"],
            gold_doc_language=data["gold_doc_language"],
            category=CategoryProfile.from_dict(data["category"]),
        )


def _draw(rng: np.random.Generator, weights: Sequence[tuple[str, float]]) -> str:
    roll = rng.random()
    cumulative = 0.0
    for value, weight in weights:
        cumulative += weight
        if roll < cumulative:
            return value
    return weights[-1][0]


def sample_category(benchmark_kind: str, rng: np.random.Generator) -> CategoryProfile:
    """Draw each categorization independently with its configured probability."""
    schema = category_schema(benchmark_kind)
    return CategoryProfile(
        user_language=_draw(rng, schema["user_language"]),
        formulation=_draw(rng, schema["formulation"]),
        linguistic_similarity=_draw(rng, schema["linguistic_similarity"]),
        question_type=_draw(rng, schema["question_type"]),
        user_need=_draw(rng, schema["user_need"]),
    )


_FACT_TOKEN = re.compile(r"FCT-[A-Za-z0-9-]+")
_ENTITY_TOKEN = re.compile(r"ENT-[A-Za-z0-9-]+")

# (formulation, question_type) -> language -> (similar wording, distant wording)
_QUESTION_PATTERNS: dict[tuple[str, str], dict[str, tuple[str, str]]] = {
    ("concise-NL", "factoid"): {
        "en": (
            "Which entity holds registry item {fact}?",
            "Who is the registered holder of item {fact}?",
        ),
        "ar": (
            "ما الجهة المسجل باسمها القيد {fact}؟",
            "من هو صاحب التسجيل للبند {fact}؟",
        ),
    },
    ("concise-NL", "open-ended"): {
        "en": (
            "Explain which entity holds registry item {fact}.",
            "Describe who is responsible for item {fact} in the register.",
        ),
        "ar": (
            "اشرح ما الجهة المسجل باسمها القيد {fact}.",
            "وضّح من المسؤول عن البند {fact} في السجل.",
        ),
    },
    ("verbose-NL", "factoid"): {
        "en": (
            "According to the official records, could you tell me which entity "
            "holds registry item {fact}?",
            "I was reviewing the register and I would like to know who the "
            "registered holder of item {fact} actually is.",
        ),
        "ar": (
            "وفقاً للسجلات الرسمية، هل يمكنك إخباري ما الجهة المسجل باسمها القيد {fact}؟",
            "كنت أراجع السجل وأود أن أعرف من هو فعلياً صاحب التسجيل للبند {fact}.",
        ),
    },
    ("verbose-NL", "open-ended"): {
        "en": (
            "Please walk me through the official records and explain which "
            "entity holds registry item {fact}.",
            "Could you give me an overview of who carries responsibility for "
            "item {fact} according to the register?",
        ),
        "ar": (
            "من فضلك استعرض السجلات الرسمية واشرح ما الجهة المسجل باسمها القيد {fact}.",
            "هل يمكنك إعطائي لمحة عن الجهة التي تتحمل المسؤولية عن البند {fact} وفقاً للسجل؟",
        ),
    },
    ("short-search", "factoid"): {
        "en": ("registry item {fact} holder", "{fact} registered holder"),
        "ar": ("الجهة المسجلة للقيد {fact}", "صاحب التسجيل {fact}"),
    },
    ("short-search", "open-ended"): {
        "en": ("registry item {fact} responsibility", "{fact} register responsibility"),
        "ar": ("مسؤولية القيد {fact}", "المسؤولية في السجل {fact}"),
    },
    ("long-search", "factoid"): {
        "en": (
            "official records registry item {fact} holding entity name",
            "register entry {fact} which organization registered holder details",
        ),
        "ar": (
            "السجلات الرسمية القيد {fact} اسم الجهة المسجل باسمها",
            "بيانات السجل {fact} أي مؤسسة صاحب التسجيل تفاصيل",
        ),
    },
    ("long-search", "open-ended"): {
        "en": (
            "official records registry item {fact} responsible entity overview",
            "register entry {fact} responsibility overview organization details",
        ),
        "ar": (
            "السجلات الرسمية القيد {fact} الجهة المسؤولة لمحة عامة",
            "بيانات السجل {fact} لمحة عن المسؤولية تفاصيل الجهة",
        ),
    },
}


class TemplateQAGenerator:
    """Deterministic generator over token-bearing synthetic passages.

    The question references the gold pair's unique fact token (phrased per the
    sampled category); the gold answer is the pair's entity token, which
    appears verbatim in every gold passage.
    """

    source = "template"

    def generate(
        self,
        pair_id: str,
        passages_text: str,
        category: CategoryProfile,
        rng: np.random.Generator,
    ) -> tuple[str, str]:
        fact = _FACT_TOKEN.search(passages_text)
        entity = _ENTITY_TOKEN.search(passages_text)
        if fact is None or entity is None:
            raise BenchmarkError(
                f"pair {pair_id!r} has no entity/fact tokens; the template generator "
                "only supports synthetic corpora"
            )
        patterns = _QUESTION_PATTERNS[(category.formulation, category.question_type)]
        similar, distant = patterns[category.user_language]
        pattern = similar if category.linguistic_similarity == "similar" else distant
        return pattern.format(fact=fact.group(0)), entity.group(0)


class RemoteQAGenerator:
    """LLM-backed generator: one QA pair per call, answerable from the document alone."""

    source = "remote"

    def __init__(self, chat_client):
        self.chat_client = chat_client

    def generate(
        self,
        pair_id: str,
        passages_text: str,
        category: CategoryProfile,
        rng: np.random.Generator,
    ) -> tuple[str, str]:
        language_name = {"ar": "Arabic", "en": "English"}.get(
            category.user_language, category.user_language
        )
        prompt = (
            "Generate exactly one question-answer pair about the document below. "
            "The question must be answerable from this document alone.\n"
            f"- Question language: {language_name}\n"
            f"- Formulation: {category.formulation}\n"
            f"- Linguistic similarity to the document: {category.linguistic_similarity}\n"
            f"- Question type: {category.question_type}\n"
            f"- User need: {category.user_need}\n"
            'Reply with JSON only: {"question": "...", "answer": "..."}\n\n'
            f"# Document:\n{passages_text}"
        )
        reply = self.chat_client.complete(GenerationRequest("", prompt, f"qa|{pair_id}"))
        match = re.search(r"\{.*\}", reply, re.DOTALL)
        if match is None:
            raise BenchmarkError(f"generator returned no JSON object for pair {pair_id!r}")
        try:
            data = json.loads(match.group(0))
            question, answer = data["question"], data["answer"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise BenchmarkError(f"malformed generator output for pair {pair_id!r}: {exc}") from exc
        if not question or not answer:
            raise BenchmarkError(f"generator returned an empty question/answer for {pair_id!r}")
        return question, answer


def _item_rng(seed: int, index: int) -> np.random.Generator:
    digest = hashlib.sha256(f"item|{seed}|{index}".encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "big") for i in range(0, 32, 4)]
    return np.random.default_rng(np.random.SeedSequence(words))


def generate_benchmark(
    corpus: Corpus,
    n_items: int,
    seed: int,
    generator,
    benchmark_kind: str = "legal",
) -> list[BenchmarkItem]:
    """Sample gold pairs uniformly (with replacement) and generate one QA per item."""
    if n_items <= 0:
        raise BenchmarkError(f"n_items must be positive, got {n_items}")
    if not corpus.passages:
        raise BenchmarkError("cannot generate a benchmark over an empty corpus")
    pair_ids = corpus.pair_ids
    items: list[BenchmarkItem] = []
    for index in range(n_items):
        rng = _item_rng(seed, index)
        category = sample_category(benchmark_kind, rng)
        gold_pair_id = pair_ids[int(rng.integers(len(pair_ids)))]
        passages = corpus.passages_for_pair(gold_pair_id)
        passages_text = "\n\n".join(p.text for p in passages)
        question, answer = generator.generate(gold_pair_id, passages_text, category, rng)
        items.append(
            BenchmarkItem(
                item_id=f"item-{index:05d}",
                question=question,
                gold_answer=answer,
                user_language=category.user_language,
                gold_pair_id=gold_pair_id,
                gold_doc_language=corpus.assignment[gold_pair_id],
                category=category,
            )
        )
    return items


def save_benchmark(items: Sequence[BenchmarkItem], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_dict(), ensure_ascii=False) + "\n")


def load_benchmark(path: str | Path, corpus: Corpus | None = None) -> list[BenchmarkItem]:
    """Read benchmark.jsonl; validate invariants against the corpus when given."""
    path = Path(path)
    if not path.exists():
        raise BenchmarkError(f"benchmark file not found: {path}")
    items: list[BenchmarkItem] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            item = BenchmarkItem.from_dict(json.loads(raw))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise BenchmarkError(f"{path}:{lineno}: malformed benchmark record: {exc}") from exc
        if item.user_language != item.category.user_language:
            raise BenchmarkError(
                f"item {item.item_id!r}: user_language {item.user_language!r} "
                f"contradicts category {item.category.user_language!r}"
            )
        if corpus is not None:
            assigned = corpus.assignment.get(item.gold_pair_id)
            if assigned is None:
                raise BenchmarkError(
                    f"item {item.item_id!r}: gold pair {item.gold_pair_id!r} not in corpus"
                )
            if assigned != item.gold_doc_language:
                raise BenchmarkError(
                    f"item {item.item_id!r}: gold_doc_language {item.gold_doc_language!r} "
                    f"contradicts corpus assignment {assigned!r}"
                )
        items.append(item)
    return items
