"""The per-completion reward pipeline shared by the HTTP service and the CLI.

One completion flows parse -> retrieve -> verify -> judge -> score. Zero-claim
completions (sentinels and parse failures) keep only format credit: their
verifier and checklist components are 0. Stage failures are tagged with the
stage name so callers can report which dependency broke.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Protocol, Sequence

from .corpus import DecompositionInput
from .errors import ClaimlabError, JudgeParseError
from .gateway import LLMClient
from .prompting import (
    Outcome,
    parse_decomposer_output,
    render_checklist_prompt,
)
from .rewards import (
    RewardBreakdown,
    RewardConfig,
    RolloutGroup,
    checklist_reward,
    format_reward_from_checks,
    make_breakdown,
    verifier_reward,
)
from .verify import VerifierClient

EVIDENCE_MODES = ("concat", "per_snippet_max")


class Retriever(Protocol):
    def retrieve(self, claim: str, k: int) -> "EvidenceSetLike": ...


class EvidenceSetLike(Protocol):
    def concatenated(self) -> str: ...


class StageFailure(ClaimlabError):
    """A pipeline stage's downstream dependency failed."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage} failed: {cause}")


@dataclass(frozen=True)
class ScoreOptions:
    verifier_mode: str | None = None
    tau: float | None = None
    judge: bool | None = None


@dataclass
class Timings:
    parse: float = 0.0
    retrieval: float = 0.0
    verify: float = 0.0
    judge: float = 0.0
    other: float = 0.0
    wall: float = 0.0

    def to_json(self) -> dict:
        return {
            "parse": self.parse,
            "retrieval": self.retrieval,
            "verify": self.verify,
            "judge": self.judge,
            "other": self.other,
            "wall": self.wall,
        }


class RewardPipeline:
    """Wires the reward computation against concrete verifier/judge/retrieval
    backends (real or mock)."""

    def __init__(
        self,
        reward_config: RewardConfig,
        verifier: VerifierClient,
        retriever: Retriever,
        judge: LLMClient | None = None,
        evidence_k: int = 5,
        evidence_mode: str = "concat",
        judge_enabled: bool = True,
    ):
        if evidence_mode not in EVIDENCE_MODES:
            raise ValueError(f"unknown evidence mode {evidence_mode!r}")
        self.reward_config = reward_config
        self.verifier = verifier
        self.retriever = retriever
        self.judge = judge
        self.evidence_k = evidence_k
        self.evidence_mode = evidence_mode
        self.judge_enabled = judge_enabled

    def _retrieve(self, claim: str):
        try:
            return self.retriever.retrieve(claim, self.evidence_k)
        except Exception as exc:
            raise StageFailure("retrieval", exc) from exc

    def _score(self, claim: str, evidence) -> float:
        try:
            if self.evidence_mode == "per_snippet_max" and getattr(evidence, "snippets", ()):
                return max(self.verifier.score_claim(claim, s.text) for s in evidence.snippets)
            return self.verifier.score_claim(claim, evidence.concatenated())
        except Exception as exc:
            raise StageFailure("verifier", exc) from exc

    def _judge_claims(
        self, inp: DecompositionInput, claims: Sequence[str]
    ) -> tuple[float, list[dict] | None, str | None]:
        from .prompting import parse_checklist_judgment

        if self.judge is None:
            return 0.0, None, "no judge endpoint configured"
        prompt = render_checklist_prompt(inp, list(claims))
        try:
            completion = self.judge.complete(prompt.system, prompt.user)
        except Exception as exc:
            raise StageFailure("judge", exc) from exc
        try:
            judgments = parse_checklist_judgment(completion, expected=len(claims))
        except JudgeParseError as exc:
            return 0.0, None, f"judge output rejected: {exc.reason}"
        reward = checklist_reward(judgments, self.reward_config)
        verdicts = [{"subclaim_index": j.subclaim_index, "checks": j.checks} for j in judgments]
        return reward, verdicts, None

    def score_completion(
        self,
        inp: DecompositionInput,
        label: int,
        completion: str,
        options: ScoreOptions = ScoreOptions(),
        timings: Timings | None = None,
    ) -> RewardBreakdown:
        t = timings or Timings()
        start = time.monotonic()

        t0 = time.monotonic()
        parsed = parse_decomposer_output(completion)
        format_r = format_reward_from_checks(parsed.checks, self.reward_config)
        t.parse += time.monotonic() - t0

        mode = options.verifier_mode or self.reward_config.verifier_mode
        tau = options.tau if options.tau is not None else self.reward_config.tau
        judge_on = options.judge if options.judge is not None else self.judge_enabled

        diagnostics: dict = {
            "outcome": parsed.outcome.value,
            "checks": {
                "tags_present": parsed.checks.tags_present,
                "order_clean": parsed.checks.order_clean,
                "list_parsed": parsed.checks.list_parsed,
                "list_quality": parsed.checks.list_quality,
            },
            "claims": list(parsed.claims),
            "verifier_mode": mode,
            "tau": tau,
        }

        if parsed.outcome is Outcome.CLAIMS:
            probs: list[float] = []
            for claim in parsed.claims:
                t0 = time.monotonic()
                evidence = self._retrieve(claim)
                t1 = time.monotonic()
                t.retrieval += t1 - t0
                probs.append(self._score(claim, evidence))
                t.verify += time.monotonic() - t1
            verifier_r = verifier_reward(probs, label, mode, tau)
            diagnostics["probabilities"] = probs
        else:
            verifier_r = 0.0
            diagnostics["zero_claim"] = True

        if not judge_on:
            checklist_r = 0.0
            diagnostics["checklist_excluded"] = True
        elif parsed.outcome is Outcome.CLAIMS:
            t0 = time.monotonic()
            checklist_r, verdicts, judge_note = self._judge_claims(inp, parsed.claims)
            t.judge += time.monotonic() - t0
            if verdicts is not None:
                diagnostics["checklist_verdicts"] = verdicts
            if judge_note:
                diagnostics["checklist_note"] = judge_note
        else:
            checklist_r = 0.0

        wall = time.monotonic() - start
        t.wall += wall
        accounted = t.parse + t.retrieval + t.verify + t.judge
        t.other = max(0.0, t.wall - accounted)
        return make_breakdown(format_r, verifier_r, checklist_r, diagnostics)

    def score_group(
        self,
        input_id: str,
        inp: DecompositionInput,
        label: int,
        completions: Sequence[str],
        options: ScoreOptions = ScoreOptions(),
    ) -> tuple[RolloutGroup, Timings]:
        if not completions:
            raise ValueError("completions must be non-empty")
        timings = Timings()
        breakdowns = [
            self.score_completion(inp, label, completion, options, timings)
            for completion in completions
        ]
        group = RolloutGroup.from_rewards(input_id, completions, breakdowns)
        return group, timings
