"""Verification metrics and human-annotation agreement statistics.

Everything here is a pure fold over immutable records. Conventions that the
underlying statistics leave open are pinned explicitly: a class with no gold
and no predicted members gets F1 = 0 and a flag; per-class recall with no
gold members is 0 and flagged; Pearson r on a zero-variance vector is None;
chance-corrected kappas are 1.0 when observed and expected agreement are both
perfect.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Label
from .errors import SchemaError

CLASSES = (Label.SUPPORTED, Label.NOT_SUPPORTED)


@dataclass(frozen=True)
class ConfusionSummary:
    counts: dict[str, dict[str, int]]  # counts[gold][pred]
    per_class_recall: dict[str, float]
    balanced_accuracy: float
    macro_f1: float
    flags: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "counts": self.counts,
            "per_class_recall": self.per_class_recall,
            "balanced_accuracy": self.balanced_accuracy,
            "macro_f1": self.macro_f1,
            "flags": list(self.flags),
        }


def _as_label(value: Label | str) -> Label:
    return value if isinstance(value, Label) else Label(value)


def confusion(preds: Sequence[Label | str], gold: Sequence[Label | str]) -> ConfusionSummary:
    """Exact integer confusion counts plus balanced accuracy and macro-F1."""
    if len(preds) != len(gold):
        raise ValueError(f"length mismatch: {len(preds)} preds vs {len(gold)} gold")
    if not preds:
        raise ValueError("empty inputs")
    p = [_as_label(x) for x in preds]
    g = [_as_label(x) for x in gold]
    counts = {a.value: {b.value: 0 for b in CLASSES} for a in CLASSES}
    for gi, pi in zip(g, p):
        counts[gi.value][pi.value] += 1

    flags: list[str] = []
    recalls: dict[str, float] = {}
    f1s: dict[str, float] = {}
    for cls in CLASSES:
        tp = counts[cls.value][cls.value]
        gold_total = sum(counts[cls.value].values())
        pred_total = sum(counts[other.value][cls.value] for other in CLASSES)
        if gold_total == 0:
            recalls[cls.value] = 0.0
            flags.append(f"no gold members for class {cls.value}")
        else:
            recalls[cls.value] = tp / gold_total
        denom = gold_total + pred_total
        if denom == 0:
            f1s[cls.value] = 0.0
            flags.append(f"F1 undefined for class {cls.value} (no gold, no predictions); set to 0")
        else:
            f1s[cls.value] = 2 * tp / denom
    return ConfusionSummary(
        counts=counts,
        per_class_recall=recalls,
        balanced_accuracy=sum(recalls.values()) / len(CLASSES),
        macro_f1=sum(f1s.values()) / len(CLASSES),
        flags=tuple(flags),
    )


def subclaim_stats(counts: Sequence[int]) -> dict:
    """Mean and histogram of per-unit subclaim counts."""
    if not counts:
        raise ValueError("counts must be non-empty")
    histogram = Counter(counts)
    zero_units = histogram.get(0, 0)
    result = {
        "mean": sum(counts) / len(counts),
        "distribution": {str(k): v for k, v in sorted(histogram.items())},
        "zero_claim_units": zero_units,
    }
    if zero_units:
        result["warning"] = f"{zero_units} unit(s) produced zero subclaims"
    return result


class Desideratum(str, Enum):
    VERIFIABILITY = "verifiability"
    COHERENCE = "coherence"
    CLARITY = "clarity"
    COMPLETENESS = "completeness"
    UNIQUENESS = "uniqueness"


SUBCLAIM_LEVEL = (Desideratum.VERIFIABILITY, Desideratum.COHERENCE, Desideratum.CLARITY)
SENTENCE_LEVEL = (Desideratum.COMPLETENESS, Desideratum.UNIQUENESS)


@dataclass(frozen=True)
class AnnotationRecord:
    item_id: str
    annotator_id: str
    desideratum: Desideratum
    level: str  # "subclaim" | "sentence"
    value: int  # 0 | 1

    def __post_init__(self) -> None:
        if self.value not in (0, 1):
            raise ValueError(f"value must be 0 or 1, got {self.value}")
        if self.level not in ("subclaim", "sentence"):
            raise ValueError(f"level must be subclaim or sentence, got {self.level}")
        sentence_only = self.desideratum in SENTENCE_LEVEL
        if sentence_only != (self.level == "sentence"):
            raise ValueError(
                f"{self.desideratum.value} annotations must be at the "
                f"{'sentence' if sentence_only else 'subclaim'} level"
            )


def load_annotations(path: str | Path) -> list[AnnotationRecord]:
    records: list[AnnotationRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                records.append(
                    AnnotationRecord(
                        item_id=str(raw["item_id"]),
                        annotator_id=str(raw["annotator_id"]),
                        desideratum=Desideratum(raw["desideratum"]),
                        level=str(raw["level"]),
                        value=int(raw["value"]),
                    )
                )
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise SchemaError(f"bad annotation record: {exc}", line=lineno) from exc
    return records


def majority_vote(values: Sequence[int]) -> int:
    """Majority label from an odd number (>= 3) of binary judgments."""
    if len(values) < 3:
        raise ValueError("majority vote needs at least 3 annotators")
    if len(values) % 2 == 0:
        raise ValueError("majority vote needs an odd annotator count")
    return 1 if sum(values) * 2 > len(values) else 0


@dataclass(frozen=True)
class SentenceStructure:
    """One annotated sentence: its id and the item ids of its subclaims."""

    sentence_id: str
    subclaim_ids: tuple[str, ...]


@dataclass(frozen=True)
class DesiderataReport:
    scores: dict[str, dict[str, float]]  # model -> desideratum -> score
    gaps: tuple[str, ...]
    sentinel_sentences: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "scores": self.scores,
            "gaps": list(self.gaps),
            "sentinel_sentences": list(self.sentinel_sentences),
        }


def desiderata_scores(
    records: Iterable[AnnotationRecord],
    structure: Mapping[str, Sequence[SentenceStructure]],
) -> DesiderataReport:
    """Majority-vote then average annotation scores per model and desideratum.

    Subclaim-level desiderata average over a sentence's subclaims first, then
    over sentences; sentence-level desiderata average the per-sentence
    binaries directly. Items missing a desideratum are reported as gaps and
    excluded from the means; sentences with no subclaims (sentinel
    decompositions) are listed separately.
    """
    votes: dict[tuple[str, Desideratum], list[int]] = defaultdict(list)
    for record in records:
        votes[(record.item_id, record.desideratum)].append(record.value)

    def majority(item_id: str, desideratum: Desideratum) -> int | None:
        values = votes.get((item_id, desideratum))
        if not values:
            return None
        return majority_vote(values)

    scores: dict[str, dict[str, float]] = {}
    gaps: list[str] = []
    sentinels: list[str] = [
        f"{model}:{sentence.sentence_id}"
        for model, sentences in structure.items()
        for sentence in sentences
        if not sentence.subclaim_ids
    ]
    for model, sentences in structure.items():
        model_scores: dict[str, float] = {}
        for desideratum in Desideratum:
            sentence_values: list[float] = []
            for sentence in sentences:
                if desideratum in SENTENCE_LEVEL:
                    vote = majority(sentence.sentence_id, desideratum)
                    if vote is None:
                        gaps.append(f"{model}:{sentence.sentence_id}:{desideratum.value}")
                        continue
                    sentence_values.append(float(vote))
                else:
                    if not sentence.subclaim_ids:
                        continue
                    subclaim_values: list[float] = []
                    for subclaim_id in sentence.subclaim_ids:
                        vote = majority(subclaim_id, desideratum)
                        if vote is None:
                            gaps.append(f"{model}:{subclaim_id}:{desideratum.value}")
                            continue
                        subclaim_values.append(float(vote))
                    if subclaim_values:
                        sentence_values.append(sum(subclaim_values) / len(subclaim_values))
            if sentence_values:
                model_scores[desideratum.value] = sum(sentence_values) / len(sentence_values)
        scores[model] = model_scores
    return DesiderataReport(scores=scores, gaps=tuple(gaps), sentinel_sentences=tuple(sentinels))


def fleiss_kappa(matrix: Sequence[Sequence[int]]) -> float:
    """Fleiss' kappa over an items x categories count matrix where every item
    was rated by the same number of annotators."""
    if not matrix:
        raise ValueError("matrix must be non-empty")
    n_raters = sum(matrix[0])
    if n_raters < 2:
        raise ValueError("need at least 2 raters")
    for row in matrix:
        if sum(row) != n_raters:
            raise ValueError("every item must have the same number of ratings")
        if any(c < 0 for c in row):
            raise ValueError("counts must be non-negative")
    n_items = len(matrix)
    n_categories = len(matrix[0])

    p_i = [
        (sum(c * c for c in row) - n_raters) / (n_raters * (n_raters - 1)) for row in matrix
    ]
    p_bar = sum(p_i) / n_items
    p_j = [sum(row[j] for row in matrix) / (n_items * n_raters) for j in range(n_categories)]
    p_e = sum(p * p for p in p_j)
    if p_e >= 1.0:
        # All ratings in one category: observed agreement is necessarily 1.
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)


def pairwise_agreement(a: Sequence[int], b: Sequence[int]) -> dict:
    """Raw percent agreement, Cohen's kappa, and Pearson r for one annotator
    pair. Pearson is None when either vector has zero variance."""
    if len(a) != len(b):
        raise ValueError("vectors must be the same length")
    if len(a) < 2:
        raise ValueError("need at least 2 items")
    n = len(a)
    agree = sum(1 for x, y in zip(a, b) if x == y)
    po = agree / n

    categories = sorted(set(a) | set(b))
    pa = {c: sum(1 for x in a if x == c) / n for c in categories}
    pb = {c: sum(1 for y in b if y == c) / n for c in categories}
    pe = sum(pa[c] * pb[c] for c in categories)
    if pe >= 1.0:
        kappa = 1.0 if po == 1.0 else 0.0
    else:
        kappa = (po - pe) / (1.0 - pe)

    mean_a = sum(a) / n
    mean_b = sum(b) / n
    var_a = sum((x - mean_a) ** 2 for x in a)
    var_b = sum((y - mean_b) ** 2 for y in b)
    if var_a == 0.0 or var_b == 0.0:
        pearson: float | None = None
    else:
        cov = sum((x - mean_a) * (y - mean_b) for x, y in zip(a, b))
        pearson = cov / math.sqrt(var_a * var_b)

    return {"percent": 100.0 * po, "cohen_kappa": kappa, "pearson_r": pearson}


def three_way_agreement(columns: Sequence[Sequence[int]]) -> float:
    """Percent of items on which all annotators agree."""
    if not columns or not columns[0]:
        raise ValueError("need at least one annotator column with items")
    n = len(columns[0])
    full = sum(1 for i in range(n) if len({col[i] for col in columns}) == 1)
    return 100.0 * full / n
