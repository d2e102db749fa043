"""Answer generation: prompt construction, chat clients, and deterministic mocks.

The prompt templates live as versioned resource files and are rendered
byte-exactly; zero kept passages is a hard error in RAG mode, with the
question-only baseline exposed as a separate explicit path.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import TYPE_CHECKING, Callable, Mapping, Sequence

import numpy as np

from .remote import API_KEY_ENV, FileCache, Transport, call_with_retry, content_key, default_transport

if TYPE_CHECKING:  # pragma: no cover
    from .benchmark import BenchmarkItem

REFUSAL_TEXT = "NO_ANSWER"

MOCK = "mock"
REMOTE = "remote"


class GenerationError(ValueError):
    """Invalid generation input or a failed completion."""


@lru_cache(maxsize=None)
def _resource(name: str) -> str:
    return (resources.files("xlrag") / "resources" / name).read_text(encoding="utf-8")


def generation_system_prompt() -> str:
    return _resource("prompt_generation_system.txt")


def norag_system_prompt() -> str:
    return _resource("prompt_norag_system.txt")


def answer_judge_template() -> str:
    return _resource("prompt_answer_judge.txt")


def relevance_judge_template() -> str:
    return _resource("prompt_relevance_judge.txt")


@dataclass(frozen=True)
class GenerationRequest:
    system_text: str
    user_text: str
    item_id: str


@dataclass(frozen=True)
class Answer:
    text: str
    item_id: str
    source: str  # mock | remote


def build_generation_prompt(
    question: str, kept_passages: Sequence[str], item_id: str = ""
) -> GenerationRequest:
    """Render the RAG prompt: numbered passage blocks in kept order, then the question."""
    if not 1 <= len(kept_passages) <= 5:
        raise GenerationError(
            f"RAG prompt requires 1..5 passages, got {len(kept_passages)}; "
            "use no_rag_answer for the retrieval-free baseline"
        )
    blocks = "\n\n".join(
        f"passage {i}:\n\n{text}" for i, text in enumerate(kept_passages, start=1)
    )
    user_text = f"# Passages:\n\n{blocks}\n\n# Question: {question}"
    return GenerationRequest(generation_system_prompt(), user_text, item_id)


@dataclass
class ChatConfig:
    base_url: str
    model: str
    temperature: float = 0.0
    attempts: int = 3
    backoff: float = 0.5
    timeout: float = 60.0
    api_key_env: str = API_KEY_ENV


class RemoteChatClient:
    """Chat-completion client with content-hash caching and retries."""

    source = REMOTE

    def __init__(
        self,
        config: ChatConfig,
        cache_dir: str = "cache/generation",
        transport: Transport | None = None,
    ):
        self.config = config
        self.cache = FileCache(cache_dir)
        self.transport = transport or default_transport(config.timeout, config.api_key_env)
        self.network_calls = 0
        self.cache_hits = 0

    def complete(self, request: GenerationRequest) -> str:
        key = content_key(
            self.config.model, repr(self.config.temperature), request.system_text, request.user_text
        )
        cached = self.cache.get(key)
        if cached is not None:
            self.cache_hits += 1
            return cached["text"]
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        payload = {
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        }

        def call() -> dict:
            self.network_calls += 1
            return self.transport(self.config.base_url, payload)

        response = call_with_retry(call, self.config.attempts, self.config.backoff)
        try:
            text = response["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GenerationError(f"malformed chat response: {exc}") from exc
        if not isinstance(text, str) or not text.strip():
            raise GenerationError("chat endpoint returned an empty completion")
        self.cache.put(key, {"text": text})
        return text


class StaticChatClient:
    """Echoes one fixed string for every request."""

    source = MOCK

    def __init__(self, text: str):
        self.text = text

    def complete(self, request: GenerationRequest) -> str:
        return self.text


class RecordedChatClient:
    """Replays recorded completions keyed by item_id; byte-stable across runs."""

    source = MOCK

    def __init__(self, responses: Mapping[str, str]):
        self.responses = dict(responses)

    def complete(self, request: GenerationRequest) -> str:
        try:
            return self.responses[request.item_id]
        except KeyError as exc:
            raise GenerationError(f"no recorded completion for item {request.item_id!r}") from exc


class ParametricMemoryClient:
    """No-RAG stand-in: answers items in its memory, refuses everything else."""

    source = MOCK

    def __init__(self, memory: Mapping[str, str], refusal: str = REFUSAL_TEXT):
        self.memory = dict(memory)
        self.refusal = refusal

    def complete(self, request: GenerationRequest) -> str:
        return self.memory.get(request.item_id, self.refusal)


def generate_answer(request: GenerationRequest, client) -> Answer:
    text = client.complete(request)
    if not isinstance(text, str) or not text.strip():
        raise GenerationError(f"empty completion for item {request.item_id!r}")
    return Answer(text=text, item_id=request.item_id, source=client.source)


def mock_generate(
    item: "BenchmarkItem",
    kept_passages: Sequence[str],
    relevance_oracle: Callable[["BenchmarkItem", str], bool],
) -> Answer:
    """Return the gold answer iff some kept passage is relevant, else a refusal.

    This makes conditional generation accuracy exactly 1 and end-to-end
    accuracy exactly mean Hits@5 on any run that uses it.
    """
    if any(relevance_oracle(item, text) for text in kept_passages):
        return Answer(text=item.gold_answer, item_id=item.item_id, source=MOCK)
    return Answer(text=REFUSAL_TEXT, item_id=item.item_id, source=MOCK)


def no_rag_answer(item: "BenchmarkItem", client) -> Answer:
    """Question-only baseline; keeps the same-language instruction, no passages."""
    request = GenerationRequest(
        system_text=norag_system_prompt(),
        user_text=f"# Question: {item.question}",
        item_id=item.item_id,
    )
    return generate_answer(request, client)


_ARABIC_CHARS = re.compile(r"[؀-ۿ]")
_LATIN_CHARS = re.compile(r"[A-Za-z]")


def answer_matches_user_language(text: str, user_language: str) -> bool | None:
    """Script-based diagnostic: does the answer look like the user's language?

    Not part of the accuracy metric; None when the text carries no script
    signal or the language has no heuristic.
    """
    arabic = len(_ARABIC_CHARS.findall(text))
    latin = len(_LATIN_CHARS.findall(text))
    if arabic == 0 and latin == 0:
        return None
    if user_language == "ar":
        return arabic >= latin
    if user_language == "en":
        return latin >= arabic
    return None


def make_seeded_memory(
    items: Sequence["BenchmarkItem"], fraction: float, seed: int
) -> dict[str, str]:
    """Pick exactly round(fraction * n) items whose gold answers the mock 'knows'."""
    if not 0.0 <= fraction <= 1.0:
        raise GenerationError("fraction must lie in [0, 1]")
    n_known = round(fraction * len(items))
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(items)]))
    picked = rng.choice(len(items), size=n_known, replace=False) if n_known else []
    return {items[int(i)].item_id: items[int(i)].gold_answer for i in picked}
