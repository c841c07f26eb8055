"""The three reward terms, their weighted-sum total, and group-relative advantages.

All components are normalized to [0, 1]; the total is their plain sum. The
weights live in a JSON config (defaults shipped as an asset) so runs can pin
them by hash rather than by code version.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .errors import ConfigurationError, JudgeParseError
from .prompting import (
    CHECKLIST_CRITERIA,
    ChecklistJudgment,
    FormatChecks,
    parse_decomposer_output,
)

FORMAT_CHECK_NAMES = ("tags_present", "order_clean", "list_parsed", "list_quality")
GATE_CRITERION = "complete_verifiable"
VERIFIER_MODES = ("dense", "sparse")


@dataclass(frozen=True)
class RewardConfig:
    """Weights for the format checks and checklist criteria, the decision
    threshold tau, and the verifier reward mode."""

    format_weights: dict[str, float] = field(
        default_factory=lambda: {
            "tags": 0.40,
            "order": 0.10,
            "parse": 0.40,
            "quality": 0.10,
        }
    )
    checklist_weights: dict[str, float] = field(
        default_factory=lambda: {
            "retrieval_relevant": 0.40,
            "references_explicit": 0.30,
            "qualifiers_sufficient": 0.15,
            "no_ungrounded_additions": 0.15,
        }
    )
    tau: float = 0.5
    verifier_mode: str = "dense"
    zero_claim_policy: str = "zero"

    def __post_init__(self) -> None:
        for name, weights, expected in (
            ("format", self.format_weights, ("tags", "order", "parse", "quality")),
            ("checklist", self.checklist_weights, tuple(c for c in CHECKLIST_CRITERIA if c != GATE_CRITERION)),
        ):
            missing = set(expected) - set(weights)
            if missing:
                raise ConfigurationError(
                    f"{name} weights missing {sorted(missing)}", field=f"{name}.{sorted(missing)[0]}"
                )
            total = sum(weights[k] for k in expected)
            if abs(total - 1.0) > 1e-9:
                raise ConfigurationError(f"{name} weights sum to {total}, expected 1.0", field=name)
        if not (0.0 <= self.tau <= 1.0):
            raise ConfigurationError(f"tau {self.tau} outside [0, 1]", field="tau")
        if self.verifier_mode not in VERIFIER_MODES:
            raise ConfigurationError(f"verifier_mode {self.verifier_mode!r}", field="verifier_mode")
        if self.zero_claim_policy != "zero":
            raise ConfigurationError(f"zero_claim_policy {self.zero_claim_policy!r}", field="zero_claim_policy")

    @property
    def format_vector(self) -> tuple[float, float, float, float]:
        w = self.format_weights
        return (w["tags"], w["order"], w["parse"], w["quality"])

    def to_json(self) -> dict:
        return {
            "format": dict(self.format_weights),
            "checklist": dict(self.checklist_weights),
            "tau": self.tau,
            "verifier_mode": self.verifier_mode,
            "zero_claim_policy": self.zero_claim_policy,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_json(cls, data: dict) -> "RewardConfig":
        kwargs: dict = {}
        if "format" in data:
            kwargs["format_weights"] = {k: float(v) for k, v in data["format"].items()}
        if "checklist" in data:
            kwargs["checklist_weights"] = {k: float(v) for k, v in data["checklist"].items()}
        for key in ("tau", "verifier_mode", "zero_claim_policy"):
            if key in data:
                kwargs[key] = data[key]
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "RewardConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read weights file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"weights file {path} is not valid JSON: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("weights file must hold a JSON object")
        return cls.from_json(data)

    @classmethod
    def default(cls) -> "RewardConfig":
        data = json.loads(
            resources.files("claimlab.assets").joinpath("default_weights.json").read_text("utf-8")
        )
        return cls.from_json(data)


def format_reward_from_checks(checks: FormatChecks, config: RewardConfig | None = None) -> float:
    """Dot product of the weight vector with the four structural booleans."""
    weights = (config or RewardConfig()).format_vector
    total = 0.0
    for w, ok in zip(weights, checks.as_tuple()):
        total += w * (1.0 if ok else 0.0)
    return total


def format_reward(raw: str, config: RewardConfig | None = None) -> float:
    """Soft format reward over a raw completion: parse, then price the checks."""
    return format_reward_from_checks(parse_decomposer_output(raw).checks, config)


def _geometric_mean(probs: Sequence[float]) -> float:
    # No epsilon flooring: one certainly-false subclaim zeroes the mean.
    if any(p == 0.0 for p in probs):
        return 0.0
    product = math.prod(probs)
    return product ** (1.0 / len(probs))


def sparse_verifier_reward(probs: Sequence[float], label: int, tau: float = 0.5) -> float:
    """1 iff the AND-thresholded sentence prediction matches the label."""
    if not probs:
        raise ValueError("probs must be non-empty")
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    predicted = 1 if all(p >= tau for p in probs) else 0
    return 1.0 if predicted == label else 0.0


def dense_verifier_reward(probs: Sequence[float], label: int) -> float:
    """One minus the squared error between the geometric-mean probability and
    the label."""
    if not probs:
        raise ValueError("probs must be non-empty")
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    for p in probs:
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"probability {p} outside [0, 1]")
    p_bar = _geometric_mean(probs)
    return 1.0 - (p_bar - label) ** 2


def verifier_reward(
    probs: Sequence[float], label: int, mode: str, tau: float = 0.5
) -> float:
    if mode == "dense":
        return dense_verifier_reward(probs, label)
    if mode == "sparse":
        return sparse_verifier_reward(probs, label, tau)
    raise ValueError(f"unknown verifier mode {mode!r}")


def subclaim_checklist_score(
    judgment: ChecklistJudgment, config: RewardConfig | None = None
) -> float:
    """Hard gate on complete_verifiable, then a weighted average over the
    remaining non-NA criteria, renormalized over the non-NA subset."""
    cfg = config or RewardConfig()
    if judgment.checks.get(GATE_CRITERION) != "Yes":
        return 0.0
    num = 0.0
    den = 0.0
    for criterion, weight in cfg.checklist_weights.items():
        answer = judgment.checks.get(criterion)
        if answer == "NA":
            continue
        den += weight
        if answer == "Yes":
            num += weight
    if den == 0.0:
        # All weighted criteria NA: the gate passed and nothing else applies.
        return 1.0
    return num / den


def checklist_reward(
    judgments: Sequence[ChecklistJudgment] | JudgeParseError | None,
    config: RewardConfig | None = None,
) -> float:
    """Geometric mean of per-subclaim scores; a judge parse failure prices
    the whole completion at zero."""
    if judgments is None or isinstance(judgments, JudgeParseError):
        return 0.0
    if not judgments:
        raise ValueError("judgments must be non-empty")
    scores = [subclaim_checklist_score(j, config) for j in judgments]
    return _geometric_mean(scores)


@dataclass(frozen=True)
class RewardBreakdown:
    format: float
    verifier: float
    checklist: float
    total: float
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "format": self.format,
            "verifier": self.verifier,
            "checklist": self.checklist,
            "total": self.total,
            "diagnostics": self.diagnostics,
        }


def total_reward(format_r: float, verifier_r: float, checklist_r: float) -> float:
    """Equally-weighted sum of the three components; no rescaling."""
    for name, value in (("format", format_r), ("verifier", verifier_r), ("checklist", checklist_r)):
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"{name} component {value} outside [0, 1]")
    return format_r + verifier_r + checklist_r


def make_breakdown(
    format_r: float, verifier_r: float, checklist_r: float, diagnostics: dict | None = None
) -> RewardBreakdown:
    return RewardBreakdown(
        format=format_r,
        verifier=verifier_r,
        checklist=checklist_r,
        total=total_reward(format_r, verifier_r, checklist_r),
        diagnostics=diagnostics or {},
    )


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """Each completion's reward minus its group's mean reward."""
    if not rewards:
        raise ValueError("rewards must be non-empty")
    mean = sum(rewards) / len(rewards)
    return [r - mean for r in rewards]


@dataclass(frozen=True)
class RolloutGroup:
    """k completions for one input with their rewards and group-relative
    advantages."""

    input_id: str
    completions: tuple[str, ...]
    rewards: tuple[RewardBreakdown, ...]
    advantages: tuple[float, ...]

    def __post_init__(self) -> None:
        if not (len(self.completions) == len(self.rewards) == len(self.advantages)):
            raise ValueError("completions, rewards, advantages must be equal length")
        total = abs(sum(self.advantages))
        scale = max(1.0, sum(abs(a) for a in self.advantages))
        if total > 1e-9 * scale:
            raise ValueError(f"advantages sum to {total}, expected ~0")

    @classmethod
    def from_rewards(
        cls, input_id: str, completions: Sequence[str], rewards: Sequence[RewardBreakdown]
    ) -> "RolloutGroup":
        return cls(
            input_id=input_id,
            completions=tuple(completions),
            rewards=tuple(rewards),
            advantages=tuple(group_advantages([r.total for r in rewards])),
        )
