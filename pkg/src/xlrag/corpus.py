"""Bilingual parallel corpus: loading, language assignment, chunking, persistence.

Every document exists in all configured languages, but the built corpus
realizes exactly one language per pair, drawn uniformly at random with a
per-pair deterministic generator so the assignment is reproducible and
independent of iteration order.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

Language = str

DEFAULT_LANGUAGES: tuple[Language, ...] = ("ar", "en")


class CorpusError(ValueError):
    """Malformed corpus input or a broken corpus invariant."""


def make_passage_id(pair_id: str, language: Language, chunk_index: int) -> str:
    return f"{pair_id}::{language}::{chunk_index}"


@dataclass(frozen=True)
class ClusterInfo:
    """Topical-cluster metadata attached to synthetic pairs."""

    cluster_id: int
    topic_similarity: float


@dataclass(frozen=True)
class ParallelDocument:
    """One document authored in every configured language."""

    pair_id: str
    variants: Mapping[Language, str]
    title: str | None = None
    cluster: ClusterInfo | None = None


@dataclass(frozen=True)
class Passage:
    """Retrieval unit: one chunk of one realized document variant."""

    passage_id: str
    pair_id: str
    language: Language
    chunk_index: int
    text: str


@dataclass
class Corpus:
    """Chunked corpus in which each pair appears in exactly one language."""

    passages: list[Passage]
    assignment: dict[str, Language]
    seed: int
    language_set: tuple[Language, ...]
    clusters: dict[str, ClusterInfo] = field(default_factory=dict)

    def validate(self) -> None:
        pair_ids = {p.pair_id for p in self.passages}
        if pair_ids != set(self.assignment):
            missing = pair_ids.symmetric_difference(self.assignment)
            raise CorpusError(f"assignment does not cover corpus pairs exactly: {sorted(missing)[:5]}")
        for p in self.passages:
            if p.language != self.assignment[p.pair_id]:
                raise CorpusError(
                    f"passage {p.passage_id} realized in {p.language!r} but pair "
                    f"{p.pair_id!r} is assigned {self.assignment[p.pair_id]!r}"
                )

    def passages_for_pair(self, pair_id: str) -> list[Passage]:
        return sorted(
            (p for p in self.passages if p.pair_id == pair_id),
            key=lambda p: p.chunk_index,
        )

    def passage_lookup(self) -> dict[str, Passage]:
        return {p.passage_id: p for p in self.passages}

    @property
    def pair_ids(self) -> list[str]:
        return sorted(self.assignment)

    def save(self, path: str | Path) -> None:
        """Write corpus.jsonl plus a sidecar meta file (seed, languages, clusters)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for p in self.passages:
                record = {
                    "passage_id": p.passage_id,
                    "pair_id": p.pair_id,
                    "language": p.language,
                    "chunk_index": p.chunk_index,
                    "text": p.text,
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        meta = {
            "seed": self.seed,
            "language_set": list(self.language_set),
            "clusters": {
                pid: {"cluster_id": c.cluster_id, "topic_similarity": c.topic_similarity}
                for pid, c in sorted(self.clusters.items())
            },
        }
        meta_path(path).write_text(json.dumps(meta, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Corpus":
        path = Path(path)
        if not path.exists():
            raise CorpusError(f"corpus file not found: {path}")
        passages: list[Passage] = []
        assignment: dict[str, Language] = {}
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
                passage = Passage(
                    passage_id=rec["passage_id"],
                    pair_id=rec["pair_id"],
                    language=rec["language"],
                    chunk_index=int(rec["chunk_index"]),
                    text=rec["text"],
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed corpus record: {exc}") from exc
            prev = assignment.get(passage.pair_id)
            if prev is not None and prev != passage.language:
                raise CorpusError(
                    f"pair {passage.pair_id!r} realized in two languages ({prev!r}, {passage.language!r})"
                )
            assignment[passage.pair_id] = passage.language
            passages.append(passage)
        passages.sort(key=lambda p: p.passage_id)

        seed = 0
        language_set = tuple(sorted({p.language for p in passages}))
        clusters: dict[str, ClusterInfo] = {}
        mp = meta_path(path)
        if mp.exists():
            meta = json.loads(mp.read_text(encoding="utf-8"))
            seed = int(meta.get("seed", 0))
            language_set = tuple(meta.get("language_set", language_set))
            clusters = {
                pid: ClusterInfo(int(c["cluster_id"]), float(c["topic_similarity"]))
                for pid, c in meta.get("clusters", {}).items()
            }
        corpus = cls(passages, assignment, seed, language_set, clusters)
        corpus.validate()
        return corpus


def meta_path(corpus_path: str | Path) -> Path:
    return Path(str(corpus_path) + ".meta.json")


def load_parallel_documents(
    path: str | Path, language_set: Sequence[Language] = DEFAULT_LANGUAGES
) -> list[ParallelDocument]:
    """Read pairs.jsonl: one record per pair with one text per configured language."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"pairs file not found: {path}")
    docs: list[ParallelDocument] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        pair_id = rec.get("pair_id")
        if not isinstance(pair_id, str) or not pair_id:
            raise CorpusError(f"{path}:{lineno}: record missing pair_id")
        if pair_id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate pair_id {pair_id!r}")
        seen.add(pair_id)
        texts = rec.get("texts")
        if not isinstance(texts, dict):
            raise CorpusError(f"{path}:{lineno}: pair {pair_id!r} missing texts object")
        variants: dict[Language, str] = {}
        for lang in language_set:
            text = texts.get(lang)
            if not isinstance(text, str) or not text.strip():
                raise CorpusError(f"pair {pair_id!r}: missing or empty {lang!r} variant")
            variants[lang] = text
        cluster = None
        if "cluster_id" in rec:
            cluster = ClusterInfo(int(rec["cluster_id"]), float(rec.get("topic_similarity", 1.0)))
        docs.append(ParallelDocument(pair_id, variants, rec.get("title"), cluster))
    return docs


def save_parallel_documents(docs: Iterable[ParallelDocument], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for doc in docs:
            rec: dict = {"pair_id": doc.pair_id, "title": doc.title, "texts": dict(doc.variants)}
            if doc.cluster is not None:
                rec["cluster_id"] = doc.cluster.cluster_id
                rec["topic_similarity"] = doc.cluster.topic_similarity
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def assign_document_languages(
    pairs: Sequence[ParallelDocument],
    seed: int,
    language_set: Sequence[Language] = DEFAULT_LANGUAGES,
) -> dict[str, Language]:
    """Map each pair to a language, uniform over the set and keyed by (seed, pair_id).

    The draw depends only on (seed, pair_id), never on position, so parallel
    and serial corpus builds agree.
    """
    if not pairs:
        raise CorpusError("cannot assign languages to an empty pair list")
    langs = tuple(sorted(set(language_set)))
    if len(langs) < 2:
        raise CorpusError("language set must contain at least two distinct languages")
    assignment: dict[str, Language] = {}
    for pair in pairs:
        digest = hashlib.blake2b(f"assign|{seed}|{pair.pair_id}".encode("utf-8"), digest_size=8)
        assignment[pair.pair_id] = langs[int.from_bytes(digest.digest(), "big") % len(langs)]
    return assignment


_SENTENCE_BREAK = re.compile(r"(?<=[.!?؟])\s+")


def _word_count(text: str) -> int:
    return len(text.split())


def _paragraph_units(paragraph: str, max_words: int) -> list[str]:
    """Split an oversized paragraph into sentence-packed units of at most max_words."""
    if _word_count(paragraph) <= max_words:
        return [paragraph]
    atoms: list[str] = []
    for sentence in _SENTENCE_BREAK.split(paragraph):
        if not sentence.strip():
            continue
        words = sentence.split()
        if len(words) <= max_words:
            atoms.append(sentence)
        else:
            atoms.extend(
                " ".join(words[i : i + max_words]) for i in range(0, len(words), max_words)
            )
    units: list[str] = []
    current: list[str] = []
    count = 0
    for atom in atoms:
        n = _word_count(atom)
        if current and count + n > max_words:
            units.append(" ".join(current))
            current, count = [], 0
        current.append(atom)
        count += n
    if current:
        units.append(" ".join(current))
    return units


def chunk_document(text: str, max_words: int) -> list[tuple[int, str]]:
    """Greedily pack paragraphs (blank-line separated) into chunks of at most max_words.

    Oversized paragraphs fall back to sentence packing, then to a hard split on
    word boundaries. No non-whitespace content is ever dropped.
    """
    if max_words < 1:
        raise CorpusError(f"max_words must be >= 1, got {max_words}")
    if not text.strip():
        return []
    units: list[str] = []
    for paragraph in re.split(r"\n\s*\n", text):
        if paragraph.strip():
            units.extend(_paragraph_units(paragraph.strip(), max_words))
    chunks: list[list[str]] = []
    current: list[str] = []
    count = 0
    for unit in units:
        n = _word_count(unit)
        if current and count + n > max_words:
            chunks.append(current)
            current, count = [], 0
        current.append(unit)
        count += n
    if current:
        chunks.append(current)
    return [(i, "\n\n".join(group)) for i, group in enumerate(chunks)]


def build_corpus(
    pairs: Sequence[ParallelDocument],
    assignment: Mapping[str, Language],
    max_words: int = 300,
    *,
    seed: int = 0,
    language_set: Sequence[Language] = DEFAULT_LANGUAGES,
) -> Corpus:
    """Chunk the assigned-language variant of every pair into passages."""
    passages: list[Passage] = []
    clusters: dict[str, ClusterInfo] = {}
    for pair in pairs:
        language = assignment.get(pair.pair_id)
        if language is None:
            raise CorpusError(f"assignment missing pair {pair.pair_id!r}")
        if language not in pair.variants:
            raise CorpusError(f"pair {pair.pair_id!r} has no {language!r} variant")
        chunks = chunk_document(pair.variants[language], max_words)
        if not chunks:
            raise CorpusError(f"pair {pair.pair_id!r}: assigned variant produced no passages")
        for idx, chunk_text in chunks:
            passages.append(
                Passage(
                    passage_id=make_passage_id(pair.pair_id, language, idx),
                    pair_id=pair.pair_id,
                    language=language,
                    chunk_index=idx,
                    text=chunk_text,
                )
            )
        if pair.cluster is not None:
            clusters[pair.pair_id] = pair.cluster
    passages.sort(key=lambda p: p.passage_id)
    corpus = Corpus(
        passages=passages,
        assignment={p.pair_id: assignment[p.pair_id] for p in pairs},
        seed=seed,
        language_set=tuple(language_set),
        clusters=clusters,
    )
    corpus.validate()
    return corpus


@dataclass(frozen=True)
class SyntheticCorpusParams:
    """Shape of the generated desk-scale bilingual corpus."""

    n_clusters: int
    pairs_per_cluster: int
    paragraphs_per_pair: int = 6
    topic_similarity: float = 0.9

    def __post_init__(self) -> None:
        if self.n_clusters < 1:
            raise CorpusError("n_clusters must be >= 1")
        if self.pairs_per_cluster < 1:
            raise CorpusError("pairs_per_cluster must be >= 1")
        if self.paragraphs_per_pair < 1:
            raise CorpusError("paragraphs_per_pair must be >= 1")
        if not 0.0 <= self.topic_similarity <= 1.0:
            raise CorpusError("topic_similarity must lie in [0, 1]")


_TOPICS_EN = (
    "fisheries", "aviation", "customs", "ports", "energy", "health", "education",
    "transport", "tourism", "agriculture", "housing", "water", "environment",
    "telecom", "insurance", "banking", "labor", "judiciary", "commerce",
    "industry", "culture", "sports", "roads", "electricity", "taxation",
)

_TOPICS_AR = (
    "المصايد", "الطيران", "الجمارك", "الموانئ", "الطاقة", "الصحة", "التعليم",
    "النقل", "السياحة", "الزراعة", "الإسكان", "المياه", "البيئة",
    "الاتصالات", "التأمين", "المصارف", "العمل", "القضاء", "التجارة",
    "الصناعة", "الثقافة", "الرياضة", "الطرق", "الكهرباء", "الضرائب",
)

_FACT_EN = (
    "Official {topic} records confirm that registry item {fact} is held by "
    "entity {entity} under the unified {topic} framework."
)

_FILLERS_EN = (
    "Entity {entity} submits periodic {topic} compliance statements to the "
    "supervising directorate for review and archival each quarter.",
    "The {topic} bulletin notes that entity {entity} maintains active "
    "certification across all declared operating regions this cycle.",
    "Inspectors reviewing {topic} filings list entity {entity} among "
    "organizations with complete documentation for the current period.",
    "Under the revised {topic} charter, entity {entity} retains obligations "
    "for disclosure, audit cooperation, and continuous record keeping.",
    "Annual {topic} summaries prepared by the council reference entity "
    "{entity} in connection with routine procedural matters only.",
)

_FACT_AR = (
    "تؤكد سجلات {topic} الرسمية أن القيد {fact} مسجل باسم الجهة {entity} ضمن الإطار الموحد لقطاع {topic}."
)

_FILLERS_AR = (
    "تقدم الجهة {entity} بيانات الامتثال الدورية في قطاع {topic} إلى المديرية المشرفة للمراجعة والأرشفة كل ربع سنة.",
    "تشير نشرة {topic} إلى أن الجهة {entity} تحتفظ باعتماد ساري المفعول في جميع مناطق التشغيل المعلنة لهذه الدورة.",
    "يدرج المفتشون عند مراجعة ملفات {topic} الجهة {entity} ضمن المؤسسات ذات الوثائق المكتملة للفترة الحالية.",
    "بموجب ميثاق {topic} المعدل تحتفظ الجهة {entity} بالتزاماتها في الإفصاح والتعاون مع التدقيق وحفظ السجلات.",
    "تشير الملخصات السنوية لقطاع {topic} التي يعدها المجلس إلى الجهة {entity} في سياق المسائل الإجرائية الاعتيادية فقط.",
)


def _token_suffix(seed: int, pair_id: str, kind: str) -> str:
    digest = hashlib.blake2b(f"token|{seed}|{pair_id}|{kind}".encode("utf-8"), digest_size=4)
    return digest.hexdigest()


def generate_synthetic_corpus(
    params: SyntheticCorpusParams, seed: int
) -> list[ParallelDocument]:
    """Emit parallel pairs with a unique entity token and fact token per pair.

    Pairs in the same cluster share topical vocabulary; each pair carries its
    cluster id and the intra-cluster topic similarity target consumed by the
    synthetic embedder. The entity token appears in every paragraph of both
    variants, the fact token in the fact paragraph of both variants.
    """
    docs: list[ParallelDocument] = []
    for c in range(params.n_clusters):
        topic_en = _TOPICS_EN[c % len(_TOPICS_EN)]
        topic_ar = _TOPICS_AR[c % len(_TOPICS_AR)]
        for i in range(params.pairs_per_cluster):
            pair_id = f"pair-{c:02d}-{i:02d}"
            entity = f"ENT-{c:02d}{i:02d}-{_token_suffix(seed, pair_id, 'entity')}"
            fact = f"FCT-{c:02d}{i:02d}-{_token_suffix(seed, pair_id, 'fact')}"
            paragraphs_en = [_FACT_EN.format(topic=topic_en, fact=fact, entity=entity)]
            paragraphs_ar = [_FACT_AR.format(topic=topic_ar, fact=fact, entity=entity)]
            for k in range(params.paragraphs_per_pair - 1):
                paragraphs_en.append(
                    _FILLERS_EN[k % len(_FILLERS_EN)].format(topic=topic_en, entity=entity)
                )
                paragraphs_ar.append(
                    _FILLERS_AR[k % len(_FILLERS_AR)].format(topic=topic_ar, entity=entity)
                )
            docs.append(
                ParallelDocument(
                    pair_id=pair_id,
                    variants={"en": "\n\n".join(paragraphs_en), "ar": "\n\n".join(paragraphs_ar)},
                    title=f"{topic_en} registry item {fact}",
                    cluster=ClusterInfo(cluster_id=c, topic_similarity=params.topic_similarity),
                )
            )
    return docs
