"""Uniform text-completion interface: remote HTTP backend plus local mocks.

The wire shape is the minimal common denominator of completion APIs: one
POST endpoint taking {prompt, max_tokens, temperature, top_p, top_k,
repeat_penalty, stop} and returning {text}. The gateway adds retries with
exponential backoff, an optional requests-per-second cap, and bounded-
parallelism batching; it never normalizes completion text.
"""

from __future__ import annotations

import hashlib
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import httpx


@dataclass(frozen=True)
class GenerationParams:
    max_tokens: int = 32
    temperature: float = 0.5
    top_p: float = 0.8
    top_k: int = 0  # 0 disables top-k
    repeat_penalty: float = 5.0
    stop_sequences: tuple[str, ...] = ("\n",)

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.top_k < 0:
            raise ValueError("top_k must be >= 0")
        if self.repeat_penalty < 1:
            raise ValueError("repeat_penalty must be >= 1")

    def payload(self) -> dict:
        return {
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "top_k": self.top_k,
            "repeat_penalty": self.repeat_penalty,
            "stop": list(self.stop_sequences),
        }


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    params: GenerationParams = field(default_factory=GenerationParams)


@dataclass(frozen=True)
class CompletionResult:
    text: str
    backend_id: str
    latency_ms: float
    attempt_count: int


class GatewayError(Exception):
    pass


class TransientBackendError(GatewayError):
    """Retryable: network failures, 5xx responses."""


class PermanentBackendError(GatewayError):
    """Not retryable: 4xx responses, protocol violations."""


class TransportError(GatewayError):
    """Retries exhausted; carries the per-attempt error log."""

    def __init__(self, message: str, attempts: list[str]):
        super().__init__(f"{message}; attempts: {attempts}")
        self.attempts = attempts


class CompletionBackend(Protocol):
    backend_id: str

    def complete_text(self, prompt: str, params: GenerationParams) -> str: ...


def apply_stop_sequences(text: str, stop_sequences: Sequence[str]) -> str:
    """Cut the text at the earliest stop-sequence occurrence."""
    cut = len(text)
    for stop in stop_sequences:
        idx = text.find(stop)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut]


class HttpCompletionBackend:
    """POSTs to a single completion endpoint; auth via an env-named API key."""

    def __init__(
        self,
        base_url: str,
        api_key_env: str | None = None,
        timeout: float = 30.0,
        client: httpx.Client | None = None,
    ):
        self.backend_id = base_url
        self._url = base_url
        self._headers = {}
        if api_key_env:
            key = os.environ.get(api_key_env)
            if not key:
                raise PermanentBackendError(f"API key variable {api_key_env} is not set")
            self._headers["Authorization"] = f"Bearer {key}"
        self._client = client or httpx.Client(timeout=timeout)

    def complete_text(self, prompt: str, params: GenerationParams) -> str:
        payload = {"prompt": prompt, **params.payload()}
        try:
            response = self._client.post(self._url, json=payload, headers=self._headers)
        except httpx.HTTPError as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        if 400 <= response.status_code < 500:
            raise PermanentBackendError(f"HTTP {response.status_code}: {response.text[:200]}")
        if response.status_code >= 500:
            raise TransientBackendError(f"HTTP {response.status_code}")
        try:
            text = response.json()["text"]
        except (ValueError, KeyError) as exc:
            raise PermanentBackendError(f"malformed backend response: {exc}") from exc
        if not isinstance(text, str):
            raise PermanentBackendError("backend 'text' field is not a string")
        return text


class FixtureBackend:
    """Exact prompt -> exact completion table, for deterministic tests."""

    def __init__(self, table: dict[str, str], default: str | None = None,
                 backend_id: str = "fixture"):
        self.backend_id = backend_id
        self._table = dict(table)
        self._default = default

    def complete_text(self, prompt: str, params: GenerationParams) -> str:
        if prompt in self._table:
            return apply_stop_sequences(self._table[prompt], ())  # fixtures are literal
        if self._default is not None:
            return self._default
        raise PermanentBackendError(f"no fixture for prompt ({prompt[:60]!r}...)")


# Word pools for the seeded template-filler mock. Present-tense verb endings
# keep the generated lines acceptable to the syntactic gate.
_MOCK_NOUNS = (
    "財布", "水", "傘", "本", "朝食", "電車の切符", "部屋", "鍵", "靴", "買い物リスト",
    "料理", "宿題", "写真", "歌", "手紙", "荷物", "窓", "机", "服", "弁当",
)
_MOCK_VERBS = (
    "持つ", "出す", "読む", "食べる", "作る", "洗う", "開ける", "しまう", "買う",
    "歌う", "書く", "撮る", "届ける", "探す", "片付ける", "運ぶ", "選ぶ", "確かめる",
)
_MOCK_FEELINGS = (
    "嬉しい", "楽しい", "少し不安だ", "気分が良くなる", "すっきりする", "眠くなる",
    "安心する", "わくわくする", "ほっとする", "準備ができたと感じる",
)

# Maps a query-prefix ending to (relation kind, suffix to append after the tail).
_MOCK_QUERY_SHAPES = (
    ("ためには、", "event", "必要がある。"),
    ("。結果として、", "event", "。"),
    ("のは、", "mental", "と思ったから。"),
    ("と、", "mental", "と思う。"),
)


class SeededMockBackend:
    """Emits plausible Japanese events/tails as a pure function of (prompt, seed).

    The last prompt line decides the shape: a template query prefix yields a
    tail continuation (plus the template's closing text); an empty last line
    (event prompts end with a newline) yields a fresh event sentence. Output
    honors the request's stop sequences, like a real completion API.
    """

    def __init__(self, seed: int = 0, backend_id: str = "mock-seeded"):
        self.backend_id = backend_id
        self._seed = seed

    def _rng(self, prompt: str) -> random.Random:
        digest = hashlib.sha256(f"{self._seed}\x1f{prompt}".encode("utf-8")).hexdigest()
        return random.Random(int(digest[:16], 16))

    def _event_sentence(self, rng: random.Random) -> str:
        return f"Xが{rng.choice(_MOCK_NOUNS)}を{rng.choice(_MOCK_VERBS)}"

    def complete_text(self, prompt: str, params: GenerationParams) -> str:
        rng = self._rng(prompt)
        last_line = prompt.rsplit("\n", 1)[-1]
        body: str | None = None
        for ending, kind, closing in _MOCK_QUERY_SHAPES:
            if last_line.endswith(ending) and last_line != ending:
                if kind == "event":
                    body = self._event_sentence(rng) + closing
                else:
                    body = rng.choice(_MOCK_FEELINGS) + closing
                break
        if body is None:
            body = self._event_sentence(rng)
        # Trailing junk shows that stop handling matters.
        raw = body + "\n" + self._event_sentence(rng)
        return apply_stop_sequences(raw, params.stop_sequences)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_seconds: float = 0.5  # doubles per attempt

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


class _RateLimiter:
    """Serializes request starts to at most `per_second` per second."""

    def __init__(self, per_second: float):
        self._interval = 1.0 / per_second
        self._lock = threading.Lock()
        self._next_allowed = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            wait = self._next_allowed - now
            self._next_allowed = max(now, self._next_allowed) + self._interval
        if wait > 0:
            time.sleep(wait)


class CompletionGateway:
    """Shareable across threads; retry and rate-limit state are synchronized."""

    def __init__(
        self,
        backend: CompletionBackend,
        retry: RetryPolicy = RetryPolicy(),
        rate_limit_per_sec: float | None = None,
        sleep=time.sleep,
    ):
        self._backend = backend
        self._retry = retry
        self._limiter = _RateLimiter(rate_limit_per_sec) if rate_limit_per_sec else None
        self._sleep = sleep

    def complete(self, request: CompletionRequest) -> CompletionResult:
        if not request.prompt:
            raise ValueError("prompt must be non-empty")
        attempts: list[str] = []
        started = time.monotonic()
        for attempt in range(1, self._retry.max_attempts + 1):
            if self._limiter:
                self._limiter.acquire()
            try:
                text = self._backend.complete_text(request.prompt, request.params)
            except PermanentBackendError:
                raise
            except Exception as exc:  # transient or unexpected transport issue
                attempts.append(f"attempt {attempt}: {exc}")
                if attempt < self._retry.max_attempts:
                    self._sleep(self._retry.backoff_seconds * 2 ** (attempt - 1))
                continue
            latency_ms = (time.monotonic() - started) * 1000.0
            return CompletionResult(
                text=text,
                backend_id=self._backend.backend_id,
                latency_ms=latency_ms,
                attempt_count=attempt,
            )
        raise TransportError("retries exhausted", attempts)

    def generate_batch(
        self,
        prompts: Sequence[str],
        params: GenerationParams = GenerationParams(),
        parallelism: int = 1,
    ) -> list[CompletionResult | Exception]:
        """Results aligned with prompts; per-item failures are returned, not raised."""
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")

        def run_one(prompt: str) -> CompletionResult | Exception:
            try:
                return self.complete(CompletionRequest(prompt=prompt, params=params))
            except Exception as exc:
                return exc

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(run_one, prompts))
