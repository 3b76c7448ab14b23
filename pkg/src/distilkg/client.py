"""HTTP clients for completion endpoints and NLL/score services.

Three modes: "live" talks to the network, "fixture" replays recorded
responses with no network access, "record" does both. Fixtures are keyed by
a content hash of the request, so a replayed run is byte-reproducible.

Live requests are retried with exponential backoff plus jitter on transient
failures (connection errors, 429, 5xx), bounded by a concurrency semaphore,
and optionally rate-limited by a client-side token bucket. Clients are safe
to share across threads.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import httpx

from .errors import ConfigError, DataError, ServiceError

__all__ = [
    "GenerationConfig",
    "FinishReason",
    "CompletionResult",
    "NllResult",
    "CompletionClient",
    "ScorerClient",
    "score_nll",
]

_RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class GenerationConfig:
    """Sampling parameters sent with every completion request."""

    model: str
    max_tokens: int
    top_p: float = 0.9
    temperature: float = 1.0
    n: int = 1
    stop: tuple[str, ...] = ()
    presence_penalty: float = 0.5
    frequency_penalty: float = 0.5

    def __post_init__(self) -> None:
        if not self.model:
            raise ConfigError("model name must be nonempty")
        if not 0 < self.top_p <= 1:
            raise ConfigError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        object.__setattr__(self, "stop", tuple(self.stop))

    def config_hash(self) -> str:
        """Stable hash recorded in triple provenance and fixture keys."""
        canonical = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def request_body(self, prompt: str) -> dict:
        return {
            "model": self.model,
            "prompt": prompt,
            "max_tokens": self.max_tokens,
            "top_p": self.top_p,
            "temperature": self.temperature,
            "n": self.n,
            "stop": list(self.stop) or None,
            "presence_penalty": self.presence_penalty,
            "frequency_penalty": self.frequency_penalty,
            "logprobs": None,
        }


class FinishReason(Enum):
    STOP = "stop"
    LENGTH = "length"
    OTHER = "other"


@dataclass(frozen=True)
class CompletionResult:
    text: str
    finish_reason: FinishReason = FinishReason.STOP
    token_logprobs: tuple[tuple[str, float], ...] | None = None


@dataclass(frozen=True)
class NllResult:
    total_nll: float
    n_tokens: int

    @property
    def mean_nll(self) -> float:
        return self.total_nll / self.n_tokens


def _fixture_key(kind: str, *parts: str) -> str:
    payload = "\n".join((kind,) + parts)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class _FixtureStore:
    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)

    def load(self, key: str) -> dict | None:
        path = self.directory / f"{key}.json"
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"corrupt fixture file {path}: {exc.msg}") from None

    def save(self, key: str, payload: dict) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / f"{key}.json"
        path.write_text(json.dumps(payload, ensure_ascii=False, sort_keys=True), encoding="utf-8")


class _TokenBucket:
    """Client-side rate limit: at most `per_minute` acquisitions per minute."""

    def __init__(self, per_minute: float) -> None:
        if per_minute <= 0:
            raise ConfigError(f"requests_per_minute must be positive, got {per_minute}")
        self._rate = per_minute / 60.0
        self._capacity = float(per_minute)
        self._tokens = float(per_minute)
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self._capacity, self._tokens + (now - self._updated) * self._rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            time.sleep(wait)


class _HttpBase:
    """Shared transport: modes, fixtures, retries, bounds, call accounting."""

    def __init__(
        self,
        mode: str = "fixture",
        base_url: str | None = None,
        fixture_dir: str | Path | None = None,
        credential_env: str | None = None,
        max_in_flight: int = 4,
        max_retries: int = 5,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        requests_per_minute: float | None = None,
        timeout: float = 30.0,
    ) -> None:
        if mode not in ("live", "fixture", "record"):
            raise ConfigError(f"mode must be live, fixture, or record, got {mode!r}")
        if mode in ("live", "record") and not base_url:
            raise ConfigError(f"{mode} mode requires a base_url")
        if mode in ("fixture", "record") and fixture_dir is None:
            raise ConfigError(f"{mode} mode requires a fixture_dir")
        if max_in_flight < 1:
            raise ConfigError(f"max_in_flight must be >= 1, got {max_in_flight}")
        if max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {max_retries}")
        self._mode = mode
        self._base_url = base_url.rstrip("/") if base_url else None
        self._store = _FixtureStore(fixture_dir) if fixture_dir is not None else None
        self._credential_env = credential_env
        self._max_in_flight = max_in_flight
        self._max_retries = max_retries
        self._backoff_base = backoff_base
        self._backoff_cap = backoff_cap
        self._bucket = _TokenBucket(requests_per_minute) if requests_per_minute else None
        self._semaphore = threading.Semaphore(max_in_flight)
        self._http = httpx.Client(timeout=timeout) if mode != "fixture" else None
        self._lock = threading.Lock()
        self.api_calls = 0

    @property
    def mode(self) -> str:
        return self._mode

    @property
    def max_in_flight(self) -> int:
        return self._max_in_flight

    def close(self) -> None:
        if self._http is not None:
            self._http.close()

    def __enter__(self) -> "_HttpBase":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def _count_call(self) -> None:
        with self._lock:
            self.api_calls += 1

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._credential_env:
            credential = os.environ.get(self._credential_env)
            if credential:
                headers["Authorization"] = f"Bearer {credential}"
        return headers

    def _sleep_backoff(self, attempt: int) -> None:
        delay = min(self._backoff_cap, self._backoff_base * (2**attempt))
        time.sleep(delay * (0.5 + random.random() / 2))

    def _post_live(self, path: str, body: dict) -> dict:
        url = f"{self._base_url}{path}"
        attempt = 0
        with self._semaphore:
            while True:
                if self._bucket is not None:
                    self._bucket.acquire()
                try:
                    response = self._http.post(url, json=body, headers=self._headers())
                except httpx.HTTPError as exc:
                    if attempt >= self._max_retries:
                        raise ServiceError(
                            f"retries exhausted after {attempt + 1} attempts to {url}: {exc}"
                        ) from None
                    self._sleep_backoff(attempt)
                    attempt += 1
                    continue
                if response.status_code in _RETRYABLE_STATUSES:
                    if attempt >= self._max_retries:
                        raise ServiceError(
                            f"retries exhausted after {attempt + 1} attempts to {url} "
                            f"(last status {response.status_code})"
                        )
                    self._sleep_backoff(attempt)
                    attempt += 1
                    continue
                if response.status_code != 200:
                    raise ServiceError(
                        f"{url} returned {response.status_code}: {response.text[:200]}"
                    )
                try:
                    return response.json()
                except ValueError:
                    raise ServiceError(
                        f"malformed response JSON from {url}: {response.text[:200]}"
                    ) from None

    def _exchange(self, path: str, body: dict, fixture_key: str) -> dict:
        """One logical request, dispatched per mode; counted in api_calls."""
        self._count_call()
        if self._mode == "fixture":
            payload = self._store.load(fixture_key)
            if payload is None:
                raise ServiceError(
                    f"no recorded fixture for key {fixture_key} "
                    f"(path {path}, fixture dir {self._store.directory})"
                )
            return payload
        payload = self._post_live(path, body)
        if self._mode == "record":
            self._store.save(fixture_key, payload)
        return payload


def _parse_finish_reason(raw: object) -> FinishReason:
    if raw == "stop":
        return FinishReason.STOP
    if raw == "length":
        return FinishReason.LENGTH
    return FinishReason.OTHER


def _parse_completion_payload(payload: dict, config: GenerationConfig) -> list[CompletionResult]:
    try:
        choices = payload["choices"]
        results = []
        for choice in choices:
            logprobs = choice.get("logprobs")
            pairs = None
            if logprobs:
                pairs = tuple(zip(logprobs["tokens"], logprobs["token_logprobs"]))
            results.append(
                CompletionResult(
                    text=choice["text"],
                    finish_reason=_parse_finish_reason(choice.get("finish_reason")),
                    token_logprobs=pairs,
                )
            )
    except (KeyError, TypeError) as exc:
        raise ServiceError(
            f"malformed completion payload ({exc!r}): {json.dumps(payload)[:200]}"
        ) from None
    if len(results) != config.n:
        raise ServiceError(f"expected {config.n} completions, endpoint returned {len(results)}")
    return results


class CompletionClient(_HttpBase):
    """Client for POST {base_url}/v1/completions."""

    def complete(self, prompt: str, config: GenerationConfig) -> list[CompletionResult]:
        """Request config.n completions of one prompt."""
        key = _fixture_key("completions", config.config_hash(), prompt)
        payload = self._exchange("/v1/completions", config.request_body(prompt), key)
        return _parse_completion_payload(payload, config)

    def complete_many(
        self, prompts: Sequence[str], config: GenerationConfig
    ) -> list[list[CompletionResult]]:
        """complete() over many prompts, concurrently, results in prompt order."""
        if not prompts:
            return []
        workers = min(self._max_in_flight, len(prompts))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: self.complete(p, config), prompts))


class ScorerClient(_HttpBase):
    """Client for POST {base_url}/v1/nll and /v1/score."""

    def __init__(self, *args: object, batch_size: int = 32, **kwargs: object) -> None:
        super().__init__(*args, **kwargs)
        if batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
        self._batch_size = batch_size

    def score_nll_many(self, texts: Sequence[str]) -> list[NllResult]:
        """Total NLL (nats) and token count for each text, in input order."""
        results: list[NllResult] = []
        for start in range(0, len(texts), self._batch_size):
            batch = list(texts[start : start + self._batch_size])
            for offset, text in enumerate(batch):
                if not text.strip():
                    raise DataError(f"cannot score empty text (item {start + offset})")
            key = _fixture_key("nll", json.dumps(batch, ensure_ascii=False))
            payload = self._exchange("/v1/nll", {"texts": batch}, key)
            try:
                rows = payload["results"]
                parsed = [
                    NllResult(total_nll=float(r["total_nll"]), n_tokens=int(r["n_tokens"]))
                    for r in rows
                ]
            except (KeyError, TypeError, ValueError) as exc:
                raise ServiceError(
                    f"malformed NLL payload ({exc!r}): {json.dumps(payload)[:200]}"
                ) from None
            if len(parsed) != len(batch):
                raise ServiceError(
                    f"expected {len(batch)} NLL results, endpoint returned {len(parsed)}"
                )
            for offset, result in enumerate(parsed):
                if result.n_tokens == 0:
                    raise DataError(f"untokenizable text: {batch[offset]!r}")
                if result.total_nll < 0:
                    raise ServiceError(
                        f"negative total_nll {result.total_nll} for text {batch[offset]!r}"
                    )
            results.extend(parsed)
        return results

    def score_nll(self, text: str) -> NllResult:
        return self.score_nll_many([text])[0]

    def score_triples(self, items: Sequence[dict]) -> list[float]:
        """Critic scores for event/relation/tail dicts, in input order."""
        scores: list[float] = []
        for start in range(0, len(items), self._batch_size):
            batch = list(items[start : start + self._batch_size])
            key = _fixture_key("score", json.dumps(batch, ensure_ascii=False, sort_keys=True))
            payload = self._exchange("/v1/score", {"triples": batch}, key)
            try:
                raw = [float(s) for s in payload["scores"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise ServiceError(
                    f"malformed score payload ({exc!r}): {json.dumps(payload)[:200]}"
                ) from None
            if len(raw) != len(batch):
                raise ServiceError(
                    f"expected {len(batch)} scores, endpoint returned {len(raw)}"
                )
            scores.extend(raw)
        return scores


def score_nll(text: str, scorer_url: str, **kwargs: object) -> NllResult:
    """One-shot live NLL lookup against a scorer endpoint."""
    with ScorerClient(mode="live", base_url=scorer_url, **kwargs) as client:
        return client.score_nll(text)
