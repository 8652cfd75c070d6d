"""Zero-shot LLM confidence scoring for entity pairs.

A prompt template asks the model how confident it is that two entity
mentions refer to the same entity and instructs it to answer with a bare
number in [0, 1]. The reply is parsed strictly first and leniently as a
fallback, with every lenient parse counted. Providers abstract the chat
backend; the deterministic mock and the fixture replay provider make the
whole stack runnable offline.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import requests

from .base import PairScorer, as_pair_records
from .cache import CacheEntry, ScoreCache, cache_key
from .types import PairRecord, ScoredPair

__all__ = [
    "TemplateError",
    "LlmError",
    "ProviderError",
    "TransportError",
    "UnparsableReply",
    "OutOfRangeReply",
    "PromptTemplate",
    "PLAIN_TEMPLATE",
    "ENRICHED_TEMPLATE",
    "render_prompt",
    "render_messages",
    "LlmConfig",
    "ChatRequest",
    "ChatProvider",
    "MockProvider",
    "ReplayProvider",
    "OpenAiChatProvider",
    "save_replay_fixture",
    "parse_confidence",
    "score_pair",
    "score_batch",
    "ScoreError",
    "ScoreBatchResult",
    "LlmScorer",
]


class TemplateError(ValueError):
    """Raised for malformed prompt templates (missing or duplicate placeholders)."""


class LlmError(Exception):
    """Base class for scoring failures."""

    def __init__(self, message: str, raw_reply: str | None = None):
        super().__init__(message)
        self.raw_reply = raw_reply


class ProviderError(LlmError):
    """A single provider call failed; callers may retry."""


class TransportError(LlmError):
    """Provider kept failing after all retries were spent."""


class UnparsableReply(LlmError):
    """The reply contains no numeric confidence at all."""


class OutOfRangeReply(LlmError):
    """The reply contains numbers, but none inside [0, 1]."""


_PLACEHOLDER_A = "{entity_a}"
_PLACEHOLDER_B = "{entity_b}"


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt text with {entity_a} and {entity_b} placeholders, each exactly once.

    When system_split is set, the paragraph before the first blank line is
    sent as the system message and the rest as the user message. The full
    text is still what gets rendered, hashed, and cached.
    """

    text: str
    kind: str = "custom"
    system_split: bool = False

    def __post_init__(self) -> None:
        for placeholder in (_PLACEHOLDER_A, _PLACEHOLDER_B):
            count = self.text.count(placeholder)
            if count != 1:
                raise TemplateError(
                    f"template must contain {placeholder} exactly once, found {count}"
                )


_PLAIN_TEXT = (
    "How confident are you that the following entities, {entity_a} and {entity_b}, "
    "refer to the same entity, allowing for the possibility of minor typos?\n"
    "\n"
    "Please return your confidence in the range of 0 and 1 only and no other words."
)

_ENRICHED_TEXT = (
    "You are a helpful and knowledgeable assistant. You will be given two entities. "
    "Both entities refer to Congressional candidates, where 'R' stands for Republican "
    "and 'D' stands for 'Democrat'.\n"
    "\n" + _PLAIN_TEXT
)

PLAIN_TEMPLATE = PromptTemplate(text=_PLAIN_TEXT, kind="plain")
ENRICHED_TEMPLATE = PromptTemplate(text=_ENRICHED_TEXT, kind="enriched", system_split=True)

_PLACEHOLDER_RE = re.compile(r"\{entity_a\}|\{entity_b\}")


def render_prompt(template: PromptTemplate, pair: PairRecord) -> str:
    """Substitute the pair into the template in one pass.

    Entity strings go in verbatim; a brace sequence inside an entity is
    never re-expanded.
    """
    mapping = {_PLACEHOLDER_A: pair.left, _PLACEHOLDER_B: pair.right}
    return _PLACEHOLDER_RE.sub(lambda m: mapping[m.group(0)], template.text)


def render_messages(template: PromptTemplate, pair: PairRecord) -> list[dict[str, str]]:
    """Chat messages for the rendered prompt, honoring the template's system split."""
    rendered = render_prompt(template, pair)
    if template.system_split and "\n\n" in rendered:
        system, user = rendered.split("\n\n", 1)
        return [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ]
    return [{"role": "user", "content": rendered}]


@dataclass(frozen=True)
class LlmConfig:
    """Settings for LLM scoring.

    The API key is read from the environment variable named by
    api_key_env, never passed through this object.
    """

    model_id: str = "gpt-4-0613"
    temperature: float = 0.2
    max_output_tokens: int = 8
    max_concurrency: int = 4
    max_retries: int = 3
    initial_backoff_ms: int = 500
    api_key_env: str = "OPENAI_API_KEY"

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_output_tokens < 1:
            raise ValueError(f"max_output_tokens must be >= 1, got {self.max_output_tokens}")
        if self.max_concurrency < 1:
            raise ValueError(f"max_concurrency must be >= 1, got {self.max_concurrency}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.initial_backoff_ms < 1:
            raise ValueError(f"initial_backoff_ms must be >= 1, got {self.initial_backoff_ms}")
        if not self.api_key_env:
            raise ValueError("api_key_env must be non-empty")

    @property
    def scorer_id(self) -> str:
        return f"{self.model_id}@T{self.temperature:g}"


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    temperature: float
    prompt: str
    messages: tuple = ()
    max_output_tokens: int = 8


class ChatProvider:
    """Backend that turns a ChatRequest into a raw text reply."""

    deterministic: bool = False

    def complete(self, request: ChatRequest) -> str:
        raise NotImplementedError


class MockProvider(ChatProvider):
    """Offline provider driven by a pure function of the rendered prompt text.

    Keeps a thread-safe call count so tests can assert call budgets and
    prove that nothing touched the network.
    """

    deterministic = True

    def __init__(self, reply_fn: Callable[[str], str]):
        self._reply_fn = reply_fn
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.calls += 1
        return self._reply_fn(request.prompt)

    @classmethod
    def constant(cls, reply: str) -> "MockProvider":
        return cls(lambda _prompt: reply)

    @classmethod
    def from_mapping(cls, replies: Mapping[str, str]) -> "MockProvider":
        def fn(prompt: str) -> str:
            try:
                return replies[prompt]
            except KeyError:
                raise ProviderError(f"no scripted reply for prompt of length {len(prompt)}") from None

        return cls(fn)

    @classmethod
    def hash_scores(cls) -> "MockProvider":
        """Replies with a stable pseudo-score derived from the prompt digest.

        The value is arbitrary but deterministic, which is enough to
        exercise scoring, caching, and reranking plumbing offline.
        """

        def fn(prompt: str) -> str:
            digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
            return f"{int(digest[:8], 16) / 0xFFFFFFFF:.6f}"

        return cls(fn)


class ReplayProvider(ChatProvider):
    """Replays recorded replies keyed by the SHA-256 of the rendered prompt.

    The fixture file holds one JSON object per line with fields
    prompt_sha256 and reply. An unknown prompt raises ProviderError.
    """

    deterministic = True

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._replies: dict[str, str] = {}
        self.calls = 0
        self._lock = threading.Lock()
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                    self._replies[doc["prompt_sha256"]] = doc["reply"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValueError(f"bad replay fixture line {lineno} in {self.path}: {exc}") from exc

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.calls += 1
        digest = hashlib.sha256(request.prompt.encode("utf-8")).hexdigest()
        try:
            return self._replies[digest]
        except KeyError:
            raise ProviderError(f"no recorded reply for prompt sha256 {digest}") from None


def save_replay_fixture(path: str | Path, replies: Mapping[str, str]) -> None:
    """Write a replay fixture mapping rendered prompt text to reply text."""
    with open(path, "w", encoding="utf-8") as fh:
        for prompt, reply in replies.items():
            digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
            fh.write(json.dumps({"prompt_sha256": digest, "reply": reply}, ensure_ascii=False) + "\n")


class OpenAiChatProvider(ChatProvider):
    """Live chat-completion backend.

    Reads the API key from the environment when constructed and keeps it
    out of every error message and log line. This is the only class that
    knows the wire format.
    """

    deterministic = False

    def __init__(
        self,
        api_key_env: str = "OPENAI_API_KEY",
        base_url: str = "https://api.openai.com/v1",
        timeout_s: float = 60.0,
    ):
        import os

        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        key = os.environ.get(api_key_env, "")
        if not key:
            raise ProviderError(f"environment variable {api_key_env} is not set")
        self._api_key = key

    def complete(self, request: ChatRequest) -> str:
        messages = [{"role": role, "content": content} for role, content in request.messages]
        if not messages:
            messages = [{"role": "user", "content": request.prompt}]
        body = {
            "model": request.model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "messages": messages,
        }
        try:
            response = requests.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {self._api_key}"},
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise ProviderError(f"chat completion request failed: {type(exc).__name__}") from exc
        if response.status_code != 200:
            snippet = response.text[:200].replace(self._api_key, "***")
            raise ProviderError(f"chat completion returned HTTP {response.status_code}: {snippet}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed chat completion response: {type(exc).__name__}") from exc


# A decimal token not glued to a word character or a dot, so "v1.5" and
# "gpt-4" contribute no candidates but "score: 0.85" does.
_DECIMAL_TOKEN_RE = re.compile(r"(?<![\w.])[-+]?(?:\d+(?:\.\d+)?|\.\d+)")
_DECIMAL_LITERAL_RE = re.compile(r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)")


def _parse_confidence(raw_reply: str) -> tuple[float, bool]:
    """Return (score, lenient_flag); raises on replies without a usable number."""
    trimmed = raw_reply.strip()
    if _DECIMAL_LITERAL_RE.fullmatch(trimmed):
        value = float(trimmed)
        if 0.0 <= value <= 1.0:
            return value, False
        raise OutOfRangeReply(f"confidence {value} outside [0, 1]", raw_reply=raw_reply)
    candidates = [float(tok) for tok in _DECIMAL_TOKEN_RE.findall(raw_reply)]
    for value in candidates:
        if 0.0 <= value <= 1.0:
            return value, True
    if candidates:
        raise OutOfRangeReply(
            f"no numeric token inside [0, 1] in reply {trimmed[:80]!r}", raw_reply=raw_reply
        )
    raise UnparsableReply(f"no numeric token in reply {trimmed[:80]!r}", raw_reply=raw_reply)


def parse_confidence(raw_reply: str) -> float:
    """Extract a confidence in [0, 1] from a model reply.

    Strict path: the whole trimmed reply is one decimal literal. Lenient
    fallback: the first decimal token inside [0, 1] anywhere in the reply.
    """
    value, _ = _parse_confidence(raw_reply)
    return value


def _build_request(config: LlmConfig, template: PromptTemplate, pair: PairRecord) -> ChatRequest:
    return ChatRequest(
        model_id=config.model_id,
        temperature=config.temperature,
        prompt=render_prompt(template, pair),
        messages=tuple(
            (m["role"], m["content"]) for m in render_messages(template, pair)
        ),
        max_output_tokens=config.max_output_tokens,
    )


def _complete_with_retries(
    provider: ChatProvider, config: LlmConfig, request: ChatRequest
) -> tuple[str, int]:
    """Call the provider, retrying transient failures; returns (reply, attempts)."""
    attempts = 0
    last: ProviderError | None = None
    for attempt in range(config.max_retries + 1):
        attempts += 1
        try:
            return provider.complete(request), attempts
        except ProviderError as exc:
            last = exc
            if attempt < config.max_retries:
                time.sleep(config.initial_backoff_ms / 1000.0 * (2**attempt))
    raise TransportError(
        f"provider failed after {attempts} attempts: {last}", raw_reply=None
    ) from last


@dataclass
class _SingleOutcome:
    scored: "ScoredPair | None"
    error: "ScoreError | None"
    lenient: bool
    cache_hit: bool
    provider_calls: int


def _score_one(
    provider: ChatProvider,
    config: LlmConfig,
    template: PromptTemplate,
    pair: PairRecord,
    cache: ScoreCache | None,
) -> _SingleOutcome:
    sid = config.scorer_id
    request = _build_request(config, template, pair)
    key = cache_key(config.model_id, config.temperature, request.prompt)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return _SingleOutcome(
                scored=ScoredPair(pair, hit.score, sid),
                error=None,
                lenient=False,
                cache_hit=True,
                provider_calls=0,
            )
    try:
        raw_reply, attempts = _complete_with_retries(provider, config, request)
    except TransportError as exc:
        return _SingleOutcome(
            scored=None,
            error=ScoreError(pair=pair, scorer_id=sid, message=str(exc), raw_reply=None),
            lenient=False,
            cache_hit=False,
            provider_calls=config.max_retries + 1,
        )
    try:
        value, lenient = _parse_confidence(raw_reply)
    except (UnparsableReply, OutOfRangeReply) as exc:
        return _SingleOutcome(
            scored=None,
            error=ScoreError(pair=pair, scorer_id=sid, message=str(exc), raw_reply=raw_reply),
            lenient=False,
            cache_hit=False,
            provider_calls=attempts,
        )
    if cache is not None:
        cache.put(CacheEntry.create(key, value, raw_reply))
    return _SingleOutcome(
        scored=ScoredPair(pair, value, sid),
        error=None,
        lenient=lenient,
        cache_hit=False,
        provider_calls=attempts,
    )


def score_pair(
    provider: ChatProvider,
    config: LlmConfig,
    template: PromptTemplate,
    pair: PairRecord,
) -> ScoredPair:
    """Score one pair, raising on transport or parse failure."""
    request = _build_request(config, template, pair)
    raw_reply, _ = _complete_with_retries(provider, config, request)
    value, _ = _parse_confidence(raw_reply)
    return ScoredPair(pair, value, config.scorer_id)


@dataclass(frozen=True)
class ScoreError:
    """A per-pair failure inside a batch; the batch itself carries on."""

    pair: PairRecord
    scorer_id: str
    message: str
    raw_reply: str | None = None


@dataclass
class ScoreBatchResult:
    """Batch output aligned with the input: one entry per input pair, in order."""

    entries: list = field(default_factory=list)
    leniency_count: int = 0
    cache_hits: int = 0
    provider_calls: int = 0

    @property
    def scored(self) -> list[ScoredPair]:
        return [e for e in self.entries if isinstance(e, ScoredPair)]

    @property
    def errors(self) -> list[ScoreError]:
        return [e for e in self.entries if isinstance(e, ScoreError)]

    @property
    def n_failed(self) -> int:
        return len(self.errors)


def score_batch(
    provider: ChatProvider,
    config: LlmConfig,
    template: PromptTemplate,
    pairs: Iterable,
    cache: ScoreCache | None = None,
) -> ScoreBatchResult:
    """Score a batch with bounded concurrency and per-pair fail-soft errors.

    At most config.max_concurrency provider calls are in flight at once.
    The cache, when given, is consulted before each call and populated
    after each successful parse; results come back in input order no
    matter how the scheduler interleaves workers.
    """
    records = as_pair_records(pairs)
    result = ScoreBatchResult()
    if not records:
        return result

    def work(record: PairRecord) -> _SingleOutcome:
        return _score_one(provider, config, template, record, cache)

    if len(records) == 1 or config.max_concurrency == 1:
        outcomes = [work(record) for record in records]
    else:
        with ThreadPoolExecutor(max_workers=min(config.max_concurrency, len(records))) as pool:
            outcomes = list(pool.map(work, records))

    for outcome in outcomes:
        result.entries.append(outcome.scored if outcome.scored is not None else outcome.error)
        result.leniency_count += int(outcome.lenient)
        result.cache_hits += int(outcome.cache_hit)
        result.provider_calls += outcome.provider_calls
    return result


class LlmScorer(PairScorer):
    """Estimator facade over a provider, config, template, and optional cache.

    Determinism follows the provider: mock and replay providers are
    reproducible, live chat completions are not, even at temperature 0.
    """

    def __init__(
        self,
        provider: ChatProvider,
        config: LlmConfig | None = None,
        template: PromptTemplate = PLAIN_TEMPLATE,
        cache: ScoreCache | None = None,
    ):
        self.provider = provider
        self.config = config
        self.template = template
        self.cache = cache

    @property
    def deterministic(self) -> bool:  # type: ignore[override]
        return bool(getattr(self.provider, "deterministic", False))

    def _config(self) -> LlmConfig:
        return self.config if self.config is not None else LlmConfig()

    @property
    def scorer_id(self) -> str:
        return self._config().scorer_id

    def score_pair(self, pair: PairRecord) -> float:
        return score_pair(self.provider, self._config(), self.template, pair).score

    def score_pairs(self, X: Iterable) -> list[ScoredPair]:
        result = self.score_batch(X)
        if result.errors:
            first = result.errors[0]
            raise LlmError(
                f"{result.n_failed} of {len(result.entries)} pairs failed; first: {first.message}",
                raw_reply=first.raw_reply,
            )
        return result.scored

    def score_batch(self, X: Iterable) -> ScoreBatchResult:
        return score_batch(self.provider, self._config(), self.template, X, self.cache)
