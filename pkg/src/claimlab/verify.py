"""Verifier client and the sentence-/response-level label aggregators.

A verifier is any service mapping (claim, document) to a support probability
in [0, 1]. Sentence-level units aggregate by logical AND at threshold tau;
response-level units aggregate by harmonic mean with a strict 0.5 decision.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import httpx

from .corpus import Label
from .errors import (
    ConfigurationError,
    GatewayTimeout,
    NormalizationError,
    TransportError,
    UpstreamError,
)
from .evidence import EvidenceSet

DEFAULT_TAU = 0.5
RESPONSE_THRESHOLD = 0.5


@dataclass(frozen=True)
class VerifierConfig:
    base_url: str
    timeout: float = 30.0
    max_retries: int = 2
    concurrency_limit: int = 8
    backoff_base: float = 1.0
    backoff_cap: float = 30.0

    @property
    def is_mock(self) -> bool:
        return self.base_url.startswith("mock:")

    @property
    def mock_path(self) -> Path:
        return Path(self.base_url[len("mock:") :])

    @classmethod
    def from_json(cls, data: dict) -> "VerifierConfig":
        return cls(**data)


class VerifierClient:
    """POST /score {claim, document} -> {probability}; `mock:` base URLs read
    a fixture of {claim_substring, probability} entries (first match wins)."""

    def __init__(self, config: VerifierConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._semaphore = threading.BoundedSemaphore(config.concurrency_limit)
        self._http: httpx.Client | None = None
        if not config.is_mock:
            self._http = httpx.Client(timeout=config.timeout, transport=transport)

    def close(self) -> None:
        if self._http is not None:
            self._http.close()

    def _mock_score(self, claim: str) -> float:
        try:
            with open(self.config.mock_path, "r", encoding="utf-8") as fh:
                entries = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"verifier fixture {self.config.mock_path} unreadable: {exc}") from exc
        for entry in entries:
            if entry.get("claim_substring", "") in claim:
                return float(entry["probability"])
        raise UpstreamError(404, "no verifier fixture entry matched the claim")

    def _http_score(self, claim: str, document: str) -> float:
        assert self._http is not None
        url = self.config.base_url.rstrip("/") + "/score"
        last: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                delay = min(self.config.backoff_cap, self.config.backoff_base * (2 ** (attempt - 1)))
                if delay > 0:
                    time.sleep(delay)
            try:
                response = self._http.post(url, json={"claim": claim, "document": document})
            except httpx.TimeoutException as exc:
                last = GatewayTimeout(str(exc))
                continue
            except httpx.TransportError as exc:
                last = TransportError(str(exc))
                continue
            if response.status_code != 200:
                last = UpstreamError(response.status_code, response.text[:200])
                continue
            return float(response.json()["probability"])
        assert last is not None
        raise last

    def score_claim(self, claim: str, evidence: str) -> float:
        """Support probability for one claim against one evidence document."""
        if not claim:
            raise ValueError("claim must be non-empty")
        with self._semaphore:
            if self.config.is_mock:
                probability = self._mock_score(claim)
            else:
                probability = self._http_score(claim, evidence)
        if not (0.0 <= probability <= 1.0):
            raise NormalizationError(f"verifier returned {probability}, outside [0, 1]")
        return probability

    def probe(self) -> bool:
        if self.config.is_mock:
            return self.config.mock_path.exists()
        try:
            self._http_score("probe", "")
            return True
        except NormalizationError:
            return True
        except Exception:
            return False


def score_claim(claim: str, evidence: str, client: VerifierClient) -> float:
    return client.score_claim(claim, evidence)


@dataclass(frozen=True)
class ClaimVerdict:
    claim: str
    evidence: EvidenceSet
    probability: float
    label: Label

    def __post_init__(self) -> None:
        if not (0.0 <= self.probability <= 1.0):
            raise ValueError(f"probability {self.probability} outside [0, 1]")


def make_verdict(
    claim: str, evidence: EvidenceSet, probability: float, tau: float = DEFAULT_TAU
) -> ClaimVerdict:
    label = Label.SUPPORTED if probability >= tau else Label.NOT_SUPPORTED
    return ClaimVerdict(claim=claim, evidence=evidence, probability=probability, label=label)


def aggregate_sentence(probs: Sequence[float], tau: float = DEFAULT_TAU) -> Label:
    """Supported iff every probability clears tau (boundary inclusive)."""
    if not probs:
        raise ValueError("probs must be non-empty")
    return Label.SUPPORTED if all(p >= tau for p in probs) else Label.NOT_SUPPORTED


def harmonic_mean(probs: Sequence[float]) -> float:
    """m / sum(1/p); any zero probability forces the mean to zero."""
    if not probs:
        raise ValueError("probs must be non-empty")
    if any(p == 0.0 for p in probs):
        return 0.0
    return len(probs) / sum(1.0 / p for p in probs)


def aggregate_response(probs: Sequence[float]) -> Label:
    """Supported iff the harmonic mean strictly exceeds 0.5."""
    return Label.SUPPORTED if harmonic_mean(probs) > RESPONSE_THRESHOLD else Label.NOT_SUPPORTED
