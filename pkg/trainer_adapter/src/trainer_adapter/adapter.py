"""Client-side glue between a GRPO trainer and the reward service.

The adapter never computes reward math locally: every group of completions
goes to POST /v1/score and comes back as totals plus precomputed
group-relative advantages. Service failures raise after bounded retries so a
training step fails loudly instead of silently training on zeroed rewards.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import httpx

RETRYABLE_STATUSES = {408, 429, 500, 502, 503, 504}


class AdapterError(Exception):
    """Adapter-level failure (service unreachable, contract violation)."""


class ConfigMismatch(AdapterError):
    """The service's active reward config does not match expectations."""


@dataclass(frozen=True)
class AdapterConfig:
    service_url: str
    group_size: int = 8
    timeout: float = 60.0
    max_retries: int = 2
    backoff_base: float = 0.5
    verifier_mode: str | None = None  # None -> service default
    tau: float | None = None
    judge: bool | None = None
    expected_weights_hash: str | None = None
    reward_log: str | None = None  # CSV path; one row per completion

    def __post_init__(self) -> None:
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")


@dataclass
class GroupScore:
    """One scored group: totals and advantages in completion order, plus the
    service's full per-completion breakdowns."""

    totals: list[float]
    advantages: list[float]
    breakdowns: list[dict]
    run_id: str


class RewardLogger:
    """Appends one CSV row per completion; `steps_jsonl` additionally logs
    the per-step mean total in the {step, reward} form the engine's report
    command plots."""

    FIELDS = ("step", "group", "slot", "format", "verifier", "checklist", "total", "advantage")

    def __init__(self, csv_path: str | Path, steps_jsonl: str | Path | None = None):
        self.csv_path = Path(csv_path)
        self.steps_jsonl = Path(steps_jsonl) if steps_jsonl else None
        self.csv_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.csv_path, "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh).writerow(self.FIELDS)
        if self.steps_jsonl:
            self.steps_jsonl.write_text("", encoding="utf-8")

    def log_step(self, step: int, groups: Sequence[GroupScore]) -> None:
        with open(self.csv_path, "a", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            for g, group in enumerate(groups):
                for slot, (breakdown, advantage) in enumerate(zip(group.breakdowns, group.advantages)):
                    writer.writerow([
                        step, g, slot,
                        breakdown["format"], breakdown["verifier"], breakdown["checklist"],
                        breakdown["total"], advantage,
                    ])
        if self.steps_jsonl:
            totals = [t for group in groups for t in group.totals]
            mean = sum(totals) / len(totals) if totals else 0.0
            with open(self.steps_jsonl, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"step": step, "reward": mean}) + "\n")


class ServiceRewardClient:
    """HTTP client for the reward service's scoring contract."""

    def __init__(self, config: AdapterConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._http = httpx.Client(timeout=config.timeout, transport=transport)
        self._base = config.service_url.rstrip("/")

    def close(self) -> None:
        self._http.close()

    def fetch_config(self) -> dict:
        response = self._http.get(self._base + "/v1/config")
        if response.status_code != 200:
            raise AdapterError(f"/v1/config returned {response.status_code}")
        return response.json()

    def verify_config(self) -> str:
        """Fetch the service config and return its weights hash; raises
        ConfigMismatch when it differs from the expected pin."""
        data = self.fetch_config()
        served = data.get("weights_hash", "")
        recomputed = hashlib.sha256(
            json.dumps(data.get("weights", {}), sort_keys=True).encode("utf-8")
        ).hexdigest()
        if served != recomputed:
            raise ConfigMismatch(
                f"service weights hash {served} does not match served weights ({recomputed})"
            )
        expected = self.config.expected_weights_hash
        if expected and served != expected:
            raise ConfigMismatch(f"service weights hash {served}, expected {expected}")
        return served

    def _post_score(self, body: dict) -> dict:
        url = self._base + "/v1/score"
        last: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff_base * (2 ** (attempt - 1)))
            try:
                response = self._http.post(url, json=body)
            except httpx.HTTPError as exc:
                last = AdapterError(f"score request failed: {exc}")
                continue
            if response.status_code in RETRYABLE_STATUSES:
                last = AdapterError(f"score request status {response.status_code}: {response.text[:200]}")
                continue
            if response.status_code != 200:
                raise AdapterError(
                    f"score request rejected ({response.status_code}): {response.text[:200]}"
                )
            return response.json()
        assert last is not None
        raise last

    def score_group(self, input_record: dict, completions: Sequence[str]) -> GroupScore:
        """Score one rollout group. `input_record` carries question/context/
        target/label; completions must match the configured group size."""
        if len(completions) != self.config.group_size:
            raise AdapterError(
                f"trainer sent {len(completions)} completions, adapter configured for k={self.config.group_size}"
            )
        options: dict = {}
        if self.config.verifier_mode is not None:
            options["verifier_mode"] = self.config.verifier_mode
        if self.config.tau is not None:
            options["tau"] = self.config.tau
        if self.config.judge is not None:
            options["judge"] = self.config.judge
        body = {"input": input_record, "completions": list(completions), "options": options}
        data = self._post_score(body)
        rewards = data.get("rewards", [])
        advantages = data.get("advantages", [])
        if len(rewards) != len(completions) or len(advantages) != len(completions):
            raise AdapterError(
                f"service returned {len(rewards)} rewards / {len(advantages)} advantages for k={len(completions)}"
            )
        return GroupScore(
            totals=[r["total"] for r in rewards],
            advantages=list(advantages),
            breakdowns=rewards,
            run_id=data.get("run_id", ""),
        )


RewardFn = Callable[..., list[float]]


def make_reward_fn(config: AdapterConfig, transport: httpx.BaseTransport | None = None) -> RewardFn:
    """Build a `(prompts, completions, metadata) -> rewards` callable for a
    GRPO trainer.

    Inputs arrive flattened with k consecutive completions per prompt;
    metadata entries (one per completion, or one per group at stride k)
    carry the score input: {question, context, target, label}. The callable
    returns service totals in order and exposes `last_advantages` plus a
    running `step` counter; when the config names a reward_log it appends
    per-completion rows and per-step means.
    """
    client = ServiceRewardClient(config, transport=transport)
    weights_hash = client.verify_config()
    logger = (
        RewardLogger(config.reward_log, str(config.reward_log) + ".steps.jsonl")
        if config.reward_log
        else None
    )
    k = config.group_size

    def reward_fn(prompts: Sequence[str], completions: Sequence[str], metadata: Sequence[dict] | None = None, **_: object) -> list[float]:
        if len(prompts) != len(completions):
            raise AdapterError(f"{len(prompts)} prompts vs {len(completions)} completions")
        if len(completions) % k != 0:
            raise AdapterError(f"batch of {len(completions)} not divisible by group size {k}")
        n_groups = len(completions) // k
        if metadata is None:
            raise AdapterError("metadata with question/context/target/label is required")
        if len(metadata) == n_groups:
            group_meta = list(metadata)
        elif len(metadata) == len(completions):
            group_meta = [metadata[g * k] for g in range(n_groups)]
        else:
            raise AdapterError(f"metadata length {len(metadata)} matches neither groups nor completions")

        groups: list[GroupScore] = []
        for g in range(n_groups):
            chunk = completions[g * k : (g + 1) * k]
            if len({prompts[g * k + i] for i in range(k)}) != 1:
                raise AdapterError(f"group {g} mixes different prompts")
            groups.append(client.score_group(dict(group_meta[g]), chunk))

        if logger is not None:
            logger.log_step(reward_fn.step, groups)
        reward_fn.step += 1
        reward_fn.last_advantages = [a for group in groups for a in group.advantages]
        reward_fn.last_groups = groups
        return [t for group in groups for t in group.totals]

    reward_fn.step = 0
    reward_fn.last_advantages = []
    reward_fn.last_groups = []
    reward_fn.weights_hash = weights_hash
    reward_fn.client = client
    return reward_fn
