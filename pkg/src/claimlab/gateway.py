"""Uniform client for OpenAI-compatible chat-completion endpoints.

One client instance per endpoint; a semaphore caps in-flight requests at the
endpoint's concurrency limit. A `mock:` base_url selects a deterministic
fixture-backed backend for hermetic tests: fixtures map prompt patterns to
canned replies, a single completion takes the first reply and slot i of a
group takes reply i modulo the list length.
"""

from __future__ import annotations

import json
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import (
    ConfigurationError,
    GatewayTimeout,
    GroupIncomplete,
    TransportError,
    UpstreamError,
)

RETRYABLE_STATUSES = {408, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str = ""
    temperature: float = 1.0
    top_p: float = 1.0
    max_tokens: int = 1024
    timeout: float = 30.0
    max_retries: int = 2
    concurrency_limit: int = 4
    api_key_env: str = ""
    backoff_base: float = 1.0
    backoff_cap: float = 30.0

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")

    @property
    def is_mock(self) -> bool:
        return self.base_url.startswith("mock:")

    @property
    def mock_path(self) -> Path:
        return Path(self.base_url[len("mock:") :])

    @classmethod
    def from_json(cls, data: dict) -> "EndpointConfig":
        return cls(**data)


@dataclass
class Telemetry:
    """Per-client counters; retried attempts are tallied separately so one
    logical call is never double-counted."""

    requests: int = 0
    retries: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    total_latency: float = 0.0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, latency: float, usage: dict, retries: int) -> None:
        with self._lock:
            self.requests += 1
            self.retries += retries
            self.prompt_tokens += int(usage.get("prompt_tokens", 0))
            self.completion_tokens += int(usage.get("completion_tokens", 0))
            self.total_latency += latency

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "requests": self.requests,
                "retries": self.retries,
                "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens,
                "total_latency": self.total_latency,
            }


class MockChatBackend:
    """Fixture-backed stand-in for a chat endpoint.

    Fixture file: JSON list of entries {pattern, replies | reply} with
    optional {status, delay, cycle}. The first entry whose regex pattern
    matches the concatenated system+user text wins. `status` simulates a
    persistent upstream error; `cycle: false` stops a group from wrapping
    around short reply lists (yielding GroupIncomplete); `delay` sleeps to
    make concurrency observable. In-flight counts are instrumented.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0
        self.calls = 0

    def _entries(self) -> list[dict]:
        try:
            with open(self.path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"mock fixture {self.path} unreadable: {exc}") from exc
        if not isinstance(data, list):
            raise ConfigurationError(f"mock fixture {self.path} must hold a JSON list")
        return data

    def available(self) -> bool:
        return self.path.exists()

    def _match(self, prompt: str) -> dict:
        for entry in self._entries():
            if re.search(entry.get("pattern", ""), prompt, re.DOTALL):
                return entry
        raise UpstreamError(404, "no mock entry matched the prompt")

    def request(self, prompt: str, n: int) -> tuple[list[str], dict]:
        with self._lock:
            self.in_flight += 1
            self.calls += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            entry = self._match(prompt)
            if entry.get("delay"):
                time.sleep(float(entry["delay"]))
            if "status" in entry:
                raise UpstreamError(int(entry["status"]), "scripted mock failure")
            replies = entry.get("replies", [entry.get("reply", "")])
            if entry.get("cycle", True):
                choices = [replies[i % len(replies)] for i in range(n)]
            else:
                choices = list(replies[:n])
            usage = {"prompt_tokens": len(prompt.split()), "completion_tokens": sum(len(c.split()) for c in choices)}
            return choices, usage
        finally:
            with self._lock:
                self.in_flight -= 1


class LLMClient:
    """Chat client for one endpoint (real or mock)."""

    def __init__(self, endpoint: EndpointConfig, transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.telemetry = Telemetry()
        self._semaphore = threading.BoundedSemaphore(endpoint.concurrency_limit)
        self.mock: MockChatBackend | None = None
        self._http: httpx.Client | None = None
        if endpoint.is_mock:
            self.mock = MockChatBackend(endpoint.mock_path)
        else:
            self._http = httpx.Client(timeout=endpoint.timeout, transport=transport)

    def close(self) -> None:
        if self._http is not None:
            self._http.close()

    def _api_key(self) -> str:
        import os

        return os.environ.get(self.endpoint.api_key_env, "") if self.endpoint.api_key_env else ""

    def _backoff(self, attempt: int) -> None:
        delay = min(self.endpoint.backoff_cap, self.endpoint.backoff_base * (2**attempt))
        if delay > 0:
            time.sleep(delay * random.random())

    def _http_request(self, system: str, user: str, n: int) -> tuple[list[str], dict, int]:
        assert self._http is not None
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": user})
        body = {
            "model": self.endpoint.model_name,
            "messages": messages,
            "temperature": self.endpoint.temperature,
            "top_p": self.endpoint.top_p,
            "max_tokens": self.endpoint.max_tokens,
            "n": n,
        }
        headers = {}
        key = self._api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = self.endpoint.base_url.rstrip("/") + "/chat/completions"

        last_exc: Exception | None = None
        for attempt in range(self.endpoint.max_retries + 1):
            if attempt:
                self._backoff(attempt - 1)
            try:
                response = self._http.post(url, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last_exc = GatewayTimeout(str(exc))
                continue
            except httpx.TransportError as exc:
                last_exc = TransportError(str(exc))
                continue
            if response.status_code in RETRYABLE_STATUSES:
                last_exc = UpstreamError(response.status_code, response.text[:200])
                continue
            if response.status_code != 200:
                raise UpstreamError(response.status_code, response.text[:200])
            data = response.json()
            choices = [c["message"]["content"] for c in data.get("choices", [])]
            return choices, data.get("usage", {}), attempt
        assert last_exc is not None
        raise last_exc

    def _request(self, system: str, user: str, n: int) -> list[str]:
        start = time.monotonic()
        with self._semaphore:
            if self.mock is not None:
                choices, usage = self.mock.request(system + "\n" + user, n)
                retries = 0
            else:
                choices, usage, retries = self._http_request(system, user, n)
        self.telemetry.record(time.monotonic() - start, usage, retries)
        return choices

    def complete(self, system: str, user: str) -> str:
        """First choice's text for a single sample."""
        choices = self._request(system, user, 1)
        if not choices:
            raise UpstreamError(502, "endpoint returned no choices")
        return choices[0]

    def complete_group(self, system: str, user: str, k: int) -> list[str]:
        """k independent samples, order preserved. A short reply list raises
        GroupIncomplete carrying the successes and per-slot errors."""
        if k < 1:
            raise ValueError("k must be >= 1")
        choices = self._request(system, user, k)
        if len(choices) < k:
            padded: list[str | None] = list(choices) + [None] * (k - len(choices))
            errors: list[Exception | None] = [None] * len(choices) + [
                UpstreamError(502, f"missing choice {i}") for i in range(len(choices), k)
            ]
            raise GroupIncomplete(padded, errors)
        return choices[:k]

    def probe(self) -> bool:
        """Transport-level reachability: fixture file present for mocks, any
        HTTP answer (including 4xx) for real endpoints."""
        if self.mock is not None:
            return self.mock.available()
        assert self._http is not None
        try:
            self._http.get(self.endpoint.base_url, timeout=min(self.endpoint.timeout, 5.0))
            return True
        except httpx.HTTPError:
            return False
