"""Unit tests against a stub reward service (httpx mock transport)."""

import csv
import hashlib
import json

import httpx
import pytest

from trainer_adapter import (
    AdapterConfig,
    AdapterError,
    ConfigMismatch,
    ServiceRewardClient,
    make_reward_fn,
)

WEIGHTS = {
    "format": {"tags": 0.40, "order": 0.10, "parse": 0.40, "quality": 0.10},
    "checklist": {
        "retrieval_relevant": 0.40,
        "references_explicit": 0.30,
        "qualifiers_sufficient": 0.15,
        "no_ungrounded_additions": 0.15,
    },
    "tau": 0.5,
    "verifier_mode": "dense",
    "zero_claim_policy": "zero",
}
WEIGHTS_HASH = hashlib.sha256(json.dumps(WEIGHTS, sort_keys=True).encode()).hexdigest()


class StubService:
    """Scores completion i at total 0.5*i (or a constant), advantages
    mean-subtracted, mimicking the real wire format."""

    def __init__(self, constant=None, short_by=0, fail_first=0, fail_status=None, timeout_first=0):
        self.constant = constant
        self.short_by = short_by
        self.fail_first = fail_first
        self.fail_status = fail_status
        self.timeout_first = timeout_first
        self.score_calls = 0
        self.bodies = []

    def handler(self, request):
        if request.url.path == "/v1/config":
            return httpx.Response(200, json={"weights": WEIGHTS, "weights_hash": WEIGHTS_HASH})
        assert request.url.path == "/v1/score"
        self.score_calls += 1
        if self.timeout_first and self.score_calls <= self.timeout_first:
            raise httpx.ReadTimeout("stub timeout", request=request)
        if self.fail_first and self.score_calls <= self.fail_first:
            return httpx.Response(self.fail_status or 500, text="stub failure")
        body = json.loads(request.content)
        self.bodies.append(body)
        k = len(body["completions"])
        totals = [self.constant if self.constant is not None else 0.5 * i for i in range(k)]
        totals = totals[: k - self.short_by]
        mean = sum(totals) / len(totals) if totals else 0.0
        rewards = [
            {"format": t, "verifier": 0.0, "checklist": 0.0, "total": t, "diagnostics": {}}
            for t in totals
        ]
        return httpx.Response(
            200,
            json={
                "run_id": "stub",
                "rewards": rewards,
                "advantages": [t - mean for t in totals],
                "timings": {},
            },
        )


def make_client(stub, **overrides):
    config = AdapterConfig(
        service_url="http://svc.test", group_size=overrides.pop("group_size", 4),
        backoff_base=0.0, **overrides,
    )
    return ServiceRewardClient(config, transport=httpx.MockTransport(stub.handler))


RECORD = {"question": "q", "context": ["c."], "target": "t.", "label": 1}


class TestScoreGroup:
    def test_totals_and_advantages_in_order(self):
        stub = StubService()
        client = make_client(stub)
        score = client.score_group(RECORD, ["a", "b", "c", "d"])
        assert score.totals == [0.0, 0.5, 1.0, 1.5]
        assert abs(sum(score.advantages)) < 1e-9
        assert stub.score_calls == 1
        assert stub.bodies[0]["completions"] == ["a", "b", "c", "d"]

    def test_trainer_k_mismatch_is_hard_error(self):
        stub = StubService()
        client = make_client(stub)
        with pytest.raises(AdapterError, match="k=4"):
            client.score_group(RECORD, ["a", "b"])
        assert stub.score_calls == 0

    def test_short_service_response_is_hard_error(self):
        stub = StubService(short_by=1)
        client = make_client(stub)
        with pytest.raises(AdapterError, match="3 rewards"):
            client.score_group(RECORD, ["a", "b", "c", "d"])

    def test_5xx_retried_then_succeeds(self):
        stub = StubService(fail_first=2, fail_status=502)
        client = make_client(stub, max_retries=3)
        score = client.score_group(RECORD, ["a", "b", "c", "d"])
        assert score.totals[1] == 0.5
        assert stub.score_calls == 3

    def test_persistent_5xx_raises(self):
        stub = StubService(fail_first=99, fail_status=500)
        client = make_client(stub, max_retries=2)
        with pytest.raises(AdapterError, match="500"):
            client.score_group(RECORD, ["a", "b", "c", "d"])
        assert stub.score_calls == 3

    def test_timeout_then_success_scores_once(self):
        stub = StubService(timeout_first=1)
        client = make_client(stub, max_retries=2)
        score = client.score_group(RECORD, ["a", "b", "c", "d"])
        assert len(score.totals) == 4
        assert stub.score_calls == 2  # one timed-out attempt, one scored

    def test_4xx_is_immediate(self):
        stub = StubService(fail_first=99, fail_status=400)
        client = make_client(stub, max_retries=5)
        with pytest.raises(AdapterError, match="400"):
            client.score_group(RECORD, ["a", "b", "c", "d"])
        assert stub.score_calls == 1

    def test_options_forwarded(self):
        stub = StubService()
        client = make_client(stub, verifier_mode="sparse", tau=0.7, judge=False)
        client.score_group(RECORD, ["a", "b", "c", "d"])
        assert stub.bodies[0]["options"] == {"verifier_mode": "sparse", "tau": 0.7, "judge": False}


class TestConfigChecksum:
    def test_matching_pin_accepted(self):
        stub = StubService()
        client = make_client(stub, expected_weights_hash=WEIGHTS_HASH)
        assert client.verify_config() == WEIGHTS_HASH

    def test_wrong_pin_rejected(self):
        stub = StubService()
        client = make_client(stub, expected_weights_hash="deadbeef")
        with pytest.raises(ConfigMismatch):
            client.verify_config()

    def test_inconsistent_service_hash_rejected(self):
        def handler(request):
            return httpx.Response(200, json={"weights": WEIGHTS, "weights_hash": "not-the-hash"})

        config = AdapterConfig(service_url="http://svc.test", group_size=4)
        client = ServiceRewardClient(config, transport=httpx.MockTransport(handler))
        with pytest.raises(ConfigMismatch):
            client.verify_config()


class TestRewardFn:
    def make_fn(self, stub, tmp_path=None, **overrides):
        config = AdapterConfig(
            service_url="http://svc.test",
            group_size=overrides.pop("group_size", 2),
            backoff_base=0.0,
            reward_log=str(tmp_path / "rewards.csv") if tmp_path else None,
            **overrides,
        )
        return make_reward_fn(config, transport=httpx.MockTransport(stub.handler))

    def test_flattened_batch_two_groups(self):
        stub = StubService()
        fn = self.make_fn(stub)
        totals = fn(["p1", "p1", "p2", "p2"], ["c1", "c2", "c3", "c4"], metadata=[RECORD, RECORD])
        assert totals == [0.0, 0.5, 0.0, 0.5]
        assert stub.score_calls == 2
        assert len(fn.last_advantages) == 4

    def test_per_completion_metadata_accepted(self):
        stub = StubService()
        fn = self.make_fn(stub)
        fn(["p", "p"], ["c1", "c2"], metadata=[RECORD, RECORD])
        assert stub.score_calls == 1

    def test_batch_not_divisible_rejected(self):
        fn = self.make_fn(StubService())
        with pytest.raises(AdapterError, match="divisible"):
            fn(["p"], ["c"], metadata=[RECORD])

    def test_mixed_prompts_in_group_rejected(self):
        fn = self.make_fn(StubService())
        with pytest.raises(AdapterError, match="mixes"):
            fn(["p1", "p2"], ["c1", "c2"], metadata=[RECORD])

    def test_missing_metadata_rejected(self):
        fn = self.make_fn(StubService())
        with pytest.raises(AdapterError, match="metadata"):
            fn(["p", "p"], ["c1", "c2"])

    def test_constant_rewards_zero_advantages(self):
        stub = StubService(constant=1.25)
        fn = self.make_fn(stub)
        totals = fn(["p", "p"], ["c1", "c2"], metadata=[RECORD])
        assert totals == [1.25, 1.25]
        assert fn.last_advantages == [0.0, 0.0]

    def test_reward_log_rows(self, tmp_path):
        stub = StubService()
        fn = self.make_fn(stub, tmp_path=tmp_path)
        for _ in range(3):
            fn(["p", "p"], ["c1", "c2"], metadata=[RECORD])
        with open(tmp_path / "rewards.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6  # 3 steps x k=2
        assert set(rows[0]) == {"step", "group", "slot", "format", "verifier", "checklist", "total", "advantage"}
        steps = (tmp_path / "rewards.csv.steps.jsonl").read_text().splitlines()
        assert len(steps) == 3
        assert json.loads(steps[0]) == {"step": 0, "reward": 0.25}

    def test_pin_checked_at_construction(self):
        with pytest.raises(ConfigMismatch):
            self.make_fn(StubService(), expected_weights_hash="feedface")
