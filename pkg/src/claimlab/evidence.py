"""Evidence retrieval: a local passage store and a web-search client behind
one interface.

The local store ranks paragraph chunks with BM25 scoring and breaks ties on
ascending source id, so results are a deterministic function of the index.
The web client caches provider responses on disk keyed by (provider, query);
cache-only mode replays byte-identical evidence without touching the network.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import tempfile
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
import httpx

from .errors import CacheMiss, ConfigurationError, RetrievalError

BM25_K1 = 1.5
BM25_B = 0.75

_TOKEN = re.compile(r"\w+")


def _tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Snippet:
    source_id: str
    text: str
    rank: int


@dataclass(frozen=True)
class EvidenceSet:
    claim: str
    snippets: tuple[Snippet, ...]
    k_requested: int

    def __post_init__(self) -> None:
        if len(self.snippets) > self.k_requested:
            raise ValueError("more snippets than requested")
        for i, snippet in enumerate(self.snippets, start=1):
            if snippet.rank != i:
                raise ValueError(f"snippet ranks must increase from 1, got {snippet.rank} at {i}")

    def concatenated(self) -> str:
        return "\n".join(s.text for s in self.snippets)

    def to_json(self) -> dict:
        return {
            "claim": self.claim,
            "k_requested": self.k_requested,
            "snippets": [
                {"source_id": s.source_id, "text": s.text, "rank": s.rank} for s in self.snippets
            ],
        }


class LocalPassageStore:
    """In-memory BM25 index over paragraph chunks of {title, text} records."""

    def __init__(self, chunking: str = "paragraph"):
        if chunking != "paragraph":
            raise ConfigurationError(f"unknown chunking mode {chunking!r}", field="chunking")
        self.chunking = chunking
        self._ids: list[str] = []
        self._texts: list[str] = []
        self._tokens: list[list[str]] = []
        self._df: Counter[str] = Counter()
        self._inverted: dict[str, list[int]] = {}
        self._avgdl = 0.0
        self._documents = 0

    def add(self, title: str, text: str) -> None:
        paragraphs = [p.strip() for p in re.split(r"\n\s*\n", text) if p.strip()]
        self._documents += 1
        for j, paragraph in enumerate(paragraphs):
            tokens = _tokenize(paragraph)
            if not tokens:
                continue
            doc_idx = len(self._ids)
            self._ids.append(f"{title}#{j}")
            self._texts.append(paragraph)
            self._tokens.append(tokens)
            for term in set(tokens):
                self._df[term] += 1
                self._inverted.setdefault(term, []).append(doc_idx)
        total = sum(len(t) for t in self._tokens)
        self._avgdl = total / len(self._tokens) if self._tokens else 0.0

    @classmethod
    def from_jsonl(cls, path: str | Path, chunking: str = "paragraph") -> "LocalPassageStore":
        store = cls(chunking)
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                record = json.loads(line)
                if "title" not in record or "text" not in record:
                    raise ConfigurationError(f"passage record at line {lineno} needs title and text")
                store.add(str(record["title"]), str(record["text"]))
        return store

    def __len__(self) -> int:
        return len(self._ids)

    def manifest(self) -> dict:
        return {
            "chunking": self.chunking,
            "documents": self._documents,
            "passages": len(self._ids),
            "k1": BM25_K1,
            "b": BM25_B,
        }

    def _idf(self, term: str) -> float:
        df = self._df.get(term, 0)
        n = len(self._ids)
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    def retrieve(self, claim: str, k: int) -> EvidenceSet:
        """Top-k passages by BM25 score; only passages sharing at least one
        term with the claim are candidates."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._ids:
            raise ConfigurationError("passage index is empty")
        query = _tokenize(claim)
        scores: dict[int, float] = {}
        for term in query:
            postings = self._inverted.get(term)
            if not postings:
                continue
            idf = self._idf(term)
            for doc_idx in postings:
                tf = self._tokens[doc_idx].count(term)
                dl = len(self._tokens[doc_idx])
                denom = tf + BM25_K1 * (1 - BM25_B + BM25_B * dl / self._avgdl)
                scores[doc_idx] = scores.get(doc_idx, 0.0) + idf * tf * (BM25_K1 + 1) / denom
        ranked = sorted(scores.items(), key=lambda item: (-item[1], self._ids[item[0]]))[:k]
        snippets = tuple(
            Snippet(source_id=self._ids[doc_idx], text=self._texts[doc_idx], rank=rank)
            for rank, (doc_idx, _) in enumerate(ranked, start=1)
        )
        return EvidenceSet(claim=claim, snippets=snippets, k_requested=k)


def retrieve_local(claim: str, k: int, store: LocalPassageStore) -> EvidenceSet:
    return store.retrieve(claim, k)


@dataclass(frozen=True)
class WebSearchConfig:
    endpoint_url: str
    provider: str = "generic"
    cache_dir: str = ".search_cache"
    cache_only: bool = False
    query_param: str = "q"
    count_param: str = "num"
    results_path: str = "organic_results"
    snippet_field: str = "snippet"
    id_field: str = "link"
    api_key_env: str = ""
    api_key_param: str = "api_key"
    timeout: float = 10.0
    max_retries: int = 2

    @classmethod
    def from_json(cls, data: dict) -> "WebSearchConfig":
        return cls(**data)


class WebSearchClient:
    """Generic JSON GET search client with an on-disk replay cache."""

    def __init__(self, config: WebSearchConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._http = httpx.Client(timeout=config.timeout, transport=transport)
        self._lock = threading.Lock()
        Path(config.cache_dir).mkdir(parents=True, exist_ok=True)

    def close(self) -> None:
        self._http.close()

    def _cache_path(self, query: str) -> Path:
        key = hashlib.sha256(f"{self.config.provider}\x00{query}".encode("utf-8")).hexdigest()
        return Path(self.config.cache_dir) / f"{key}.json"

    def _write_cache(self, path: Path, payload: dict) -> None:
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, ensure_ascii=False, sort_keys=True)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _fetch(self, query: str, k: int) -> dict:
        params = {self.config.query_param: query, self.config.count_param: str(k)}
        key = os.environ.get(self.config.api_key_env, "") if self.config.api_key_env else ""
        if key:
            params[self.config.api_key_param] = key
        last: Exception | None = None
        for _ in range(self.config.max_retries + 1):
            try:
                response = self._http.get(self.config.endpoint_url, params=params)
            except httpx.HTTPError as exc:
                last = RetrievalError(f"search transport failure: {exc}")
                continue
            if response.status_code != 200:
                last = RetrievalError(f"search provider status {response.status_code}")
                continue
            return response.json()
        assert last is not None
        raise last

    def _extract(self, payload: dict) -> list[dict]:
        node: object = payload
        for part in self.config.results_path.split("."):
            if not isinstance(node, dict) or part not in node:
                return []
            node = node[part]
        return node if isinstance(node, list) else []

    def retrieve(self, claim: str, k: int) -> EvidenceSet:
        """Top-k organic result snippets in provider order, replayed from the
        cache when present."""
        if k < 1:
            raise ValueError("k must be >= 1")
        path = self._cache_path(claim)
        with self._lock:
            if path.exists():
                with open(path, "r", encoding="utf-8") as fh:
                    payload = json.load(fh)
            elif self.config.cache_only:
                raise CacheMiss(f"no cached response for query {claim!r}")
            else:
                payload = self._fetch(claim, k)
                self._write_cache(path, payload)
        results = self._extract(payload)[:k]
        snippets = tuple(
            Snippet(
                source_id=str(item.get(self.config.id_field, f"result-{i}")),
                text=str(item.get(self.config.snippet_field, "")),
                rank=i,
            )
            for i, item in enumerate(results, start=1)
        )
        return EvidenceSet(claim=claim, snippets=snippets, k_requested=k)

    def probe(self) -> bool:
        """Cache-only mode is healthy iff the cache directory is readable;
        live mode needs a reachable endpoint."""
        if self.config.cache_only:
            return Path(self.config.cache_dir).is_dir()
        try:
            self._http.get(self.config.endpoint_url, timeout=min(self.config.timeout, 5.0))
            return True
        except httpx.HTTPError:
            return False


def retrieve_web(claim: str, k: int, client: WebSearchClient) -> EvidenceSet:
    return client.retrieve(claim, k)
