"""Dataset ingestion, sentence segmentation, and context-window construction.

A labeled unit is a question plus a segmented response and a 1-based span of
sentences covered by its Supported/NotSupported label. Each sentence in the
span becomes one decomposition input: the sentence itself plus a local window
of surrounding sentences.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import SchemaError

DEFAULT_PRECEDING = 2
DEFAULT_FOLLOWING = 2


class Label(str, Enum):
    SUPPORTED = "S"
    NOT_SUPPORTED = "NS"


class Granularity(str, Enum):
    SENTENCE = "sentence"
    RESPONSE = "response"


@dataclass(frozen=True)
class LabeledUnit:
    """One labeled claim unit: a span of sentences inside a segmented response."""

    id: str
    question: str
    sentences: tuple[str, ...]
    unit_span: tuple[int, int]  # 1-based inclusive
    label: Label
    granularity: Granularity

    def __post_init__(self) -> None:
        if not self.sentences:
            raise ValueError(f"unit {self.id}: sentences must be non-empty")
        start, end = self.unit_span
        n = len(self.sentences)
        if not (1 <= start <= end <= n):
            raise ValueError(f"unit {self.id}: span {self.unit_span} outside [1, {n}]")

    @property
    def span_indices(self) -> range:
        start, end = self.unit_span
        return range(start, end + 1)


@dataclass(frozen=True)
class DecompositionInput:
    """The (question, context window, target sentence) triple fed to the decomposer.

    `context` holds the window sentences excluding the target; `context_indices`
    carries their 1-based positions so renderers can tell whether response
    material exists beyond the window on either side.
    """

    question: str
    context: tuple[str, ...]
    context_indices: tuple[int, ...]
    target: str
    target_index: int
    total_sentences: int

    def __post_init__(self) -> None:
        if len(self.context) != len(self.context_indices):
            raise ValueError("context and context_indices length mismatch")
        if not (1 <= self.target_index <= self.total_sentences):
            raise ValueError(f"target_index {self.target_index} outside [1, {self.total_sentences}]")
        if self.target_index in self.context_indices:
            raise ValueError("context must not contain the target sentence")
        for i in self.context_indices:
            if not (1 <= i <= self.total_sentences):
                raise ValueError(f"context index {i} outside [1, {self.total_sentences}]")

    @property
    def window_start(self) -> int:
        return min((*self.context_indices, self.target_index))

    @property
    def window_end(self) -> int:
        return max((*self.context_indices, self.target_index))

    @property
    def truncated_left(self) -> bool:
        """True iff response material exists before the window."""
        return self.window_start > 1

    @property
    def truncated_right(self) -> bool:
        """True iff response material exists after the window."""
        return self.window_end < self.total_sentences


# Multi-letter abbreviations that do not end a sentence. Single capital
# initials ("A. B. C.") are deliberately absent: they split.
_ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "rev", "gen", "rep",
    "sen", "gov", "capt", "sgt", "col", "lt", "maj", "hon", "fr",
    "vs", "etc", "approx", "dept", "est", "fig", "no", "al", "inc", "ltd",
    "co", "corp", "univ", "assn", "bros", "ave", "blvd", "rd", "mt",
    "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct",
    "nov", "dec", "e.g", "i.e", "cf", "ca",
}

_BOUNDARY = re.compile(r"([.!?]+[\"'”’)\]]*)\s+")

Segmenter = Callable[[str], list[str]]


def _rule_segment(text: str) -> list[str]:
    """Deterministic rule-based splitter: terminator + whitespace ends a
    sentence unless the preceding token is a known multi-letter abbreviation."""
    pieces: list[str] = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        candidate = text[start : m.end(1)]
        word = re.search(r"[\w.’']+$", candidate.rstrip(".!?\"'”’)]"))
        token = word.group(0).lower().rstrip(".") if word else ""
        if token in _ABBREVIATIONS and candidate.rstrip()[-1] == ".":
            continue
        pieces.append(candidate)
        start = m.end()
    tail = text[start:]
    if tail.strip():
        pieces.append(tail)
    return [p.strip() for p in pieces if p.strip()]


def segment_response(text: str, segmenter: Segmenter | None = None) -> list[str]:
    """Split a raw response into sentences.

    Empty input yields an empty list. Concatenating the result reproduces the
    input modulo whitespace; no sentence is empty. A custom segmenter callable
    may replace the rule-based default.
    """
    if not text.strip():
        return []
    return (segmenter or _rule_segment)(text)


def build_window(
    sentences: Sequence[str],
    index: int,
    p: int = DEFAULT_PRECEDING,
    f: int = DEFAULT_FOLLOWING,
    question: str = "",
) -> DecompositionInput:
    """Build the decomposition input for 1-based `index` with `p` preceding
    and `f` following context sentences, clamped to [1, n]."""
    n = len(sentences)
    if not (1 <= index <= n):
        raise ValueError(f"index {index} outside [1, {n}]")
    if p < 0 or f < 0:
        raise ValueError("p and f must be >= 0")
    lo = max(1, index - p)
    hi = min(n, index + f)
    idxs = tuple(i for i in range(lo, hi + 1) if i != index)
    return DecompositionInput(
        question=question,
        context=tuple(sentences[i - 1] for i in idxs),
        context_indices=idxs,
        target=sentences[index - 1],
        target_index=index,
        total_sentences=n,
    )


def iter_inputs(
    unit: LabeledUnit, p: int = DEFAULT_PRECEDING, f: int = DEFAULT_FOLLOWING
) -> Iterable[tuple[int, DecompositionInput]]:
    """Yield (sentence_index, DecompositionInput) for every sentence in the
    unit's labeled span. Multi-sentence spans decompose per sentence; their
    subclaims are pooled downstream."""
    for i in unit.span_indices:
        yield i, build_window(unit.sentences, i, p, f, question=unit.question)


_LABELS = {"S": Label.SUPPORTED, "NS": Label.NOT_SUPPORTED}


def _parse_label(raw: object, line: int) -> Label:
    if raw not in _LABELS:
        raise SchemaError(f"unknown label {raw!r} (expected 'S' or 'NS')", line=line, field="label")
    return _LABELS[raw]  # type: ignore[index]


def _require(record: dict, key: str, line: int) -> object:
    if key not in record:
        raise SchemaError(f"missing required field {key!r}", line=line, field=key)
    return record[key]


def load_dataset(
    path: str | Path,
    schema: str,
    segmenter: Segmenter | None = None,
) -> list[LabeledUnit]:
    """Load line-delimited JSON records into LabeledUnits.

    schema "sentence_level": {id, question, sentences, unit_span, label}.
    schema "response_level": {id, question, response, label}; the response is
    segmented on load and the span covers the whole response.
    Malformed lines raise SchemaError carrying the 1-based line number.
    """
    if schema not in ("sentence_level", "response_level"):
        raise ValueError(f"unknown schema {schema!r}")
    units: list[LabeledUnit] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw_line in enumerate(fh, start=1):
            if not raw_line.strip():
                continue
            try:
                record = json.loads(raw_line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(record, dict):
                raise SchemaError("record is not an object", line=lineno)
            unit_id = str(_require(record, "id", lineno))
            question = _require(record, "question", lineno)
            if not isinstance(question, str):
                raise SchemaError("field 'question' must be a string", line=lineno, field="question")
            label = _parse_label(_require(record, "label", lineno), lineno)
            if schema == "sentence_level":
                sentences = _require(record, "sentences", lineno)
                if not isinstance(sentences, list) or not all(isinstance(s, str) for s in sentences):
                    raise SchemaError("field 'sentences' must be a list of strings", line=lineno, field="sentences")
                span = _require(record, "unit_span", lineno)
                if not (isinstance(span, list) and len(span) == 2 and all(isinstance(i, int) for i in span)):
                    raise SchemaError("field 'unit_span' must be [start, end]", line=lineno, field="unit_span")
                granularity = Granularity(record.get("granularity", "sentence"))
                try:
                    unit = LabeledUnit(
                        id=unit_id,
                        question=question,
                        sentences=tuple(sentences),
                        unit_span=(span[0], span[1]),
                        label=label,
                        granularity=granularity,
                    )
                except ValueError as exc:
                    raise SchemaError(str(exc), line=lineno) from exc
            else:
                response = _require(record, "response", lineno)
                if not isinstance(response, str):
                    raise SchemaError("field 'response' must be a string", line=lineno, field="response")
                sentences = segment_response(response, segmenter)
                if not sentences:
                    raise SchemaError("response segmented to zero sentences", line=lineno, field="response")
                unit = LabeledUnit(
                    id=unit_id,
                    question=question,
                    sentences=tuple(sentences),
                    unit_span=(1, len(sentences)),
                    label=label,
                    granularity=Granularity.RESPONSE,
                )
            units.append(unit)
    return units


def dump_dataset(units: Iterable[LabeledUnit], path: str | Path) -> None:
    """Write units in the sentence_level schema (plus granularity) so that a
    reload reproduces them identically."""
    with open(path, "w", encoding="utf-8") as fh:
        for u in units:
            record = {
                "id": u.id,
                "question": u.question,
                "sentences": list(u.sentences),
                "unit_span": list(u.unit_span),
                "label": u.label.value,
                "granularity": u.granularity.value,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
