import json

import pytest

from claimlab.corpus import build_window
from claimlab.errors import UpstreamError
from claimlab.evidence import LocalPassageStore
from claimlab.gateway import EndpointConfig, LLMClient
from claimlab.pipeline import RewardPipeline, ScoreOptions, StageFailure, Timings
from claimlab.rewards import RewardConfig
from claimlab.verify import VerifierClient, VerifierConfig

from helpers import ALL_YES, completion_for, judge_reply, write_json

SENTENCES = ["Mars is red.", "Mars has two moons.", "Venus has none."]


def make_pipeline(stack, judge=True, **kwargs):
    return RewardPipeline(
        reward_config=kwargs.pop("reward_config", RewardConfig()),
        verifier=VerifierClient(VerifierConfig(base_url=f"mock:{stack['verifier']}")),
        retriever=LocalPassageStore.from_jsonl(stack["passages"]),
        judge=LLMClient(EndpointConfig(base_url=f"mock:{stack['judge']}")) if judge else None,
        evidence_k=3,
        **kwargs,
    )


def make_inp():
    return build_window(SENTENCES, 2, 2, 2, question="Tell me about Mars.")


class TestScoreCompletion:
    def test_full_credit_path(self, mock_stack):
        pipeline = make_pipeline(mock_stack)
        breakdown = pipeline.score_completion(make_inp(), 1, completion_for(["a true fact"]))
        assert breakdown.format == 1.0
        assert breakdown.verifier == pytest.approx(1 - (0.9 - 1) ** 2)
        assert breakdown.checklist == 1.0
        assert breakdown.total == pytest.approx(breakdown.format + breakdown.verifier + breakdown.checklist)
        assert breakdown.diagnostics["probabilities"] == [0.9]

    def test_sentinel_keeps_only_format_credit(self, mock_stack):
        pipeline = make_pipeline(mock_stack)
        breakdown = pipeline.score_completion(
            make_inp(), 1, "<think>r</think><output>No verifiable claim</output>"
        )
        assert breakdown.format == 1.0
        assert breakdown.verifier == 0.0
        assert breakdown.checklist == 0.0
        assert breakdown.diagnostics["zero_claim"] is True

    def test_parse_failure_keeps_partial_format(self, mock_stack):
        pipeline = make_pipeline(mock_stack)
        breakdown = pipeline.score_completion(make_inp(), 1, "<think>r</think><output>prose</output>")
        assert breakdown.format == 0.5
        assert breakdown.verifier == 0.0
        assert breakdown.checklist == 0.0

    def test_sparse_mode_override(self, mock_stack):
        pipeline = make_pipeline(mock_stack)
        options = ScoreOptions(verifier_mode="sparse")
        good = pipeline.score_completion(make_inp(), 1, completion_for(["a true fact"]), options)
        bad = pipeline.score_completion(make_inp(), 0, completion_for(["a true fact"]), options)
        assert good.verifier == 1.0
        assert bad.verifier == 0.0

    def test_tau_override_flips_sparse_prediction(self, mock_stack):
        pipeline = make_pipeline(mock_stack)
        # catch-all probability is 0.6: supported at tau 0.5, not at 0.95
        low = pipeline.score_completion(
            make_inp(), 1, completion_for(["some other claim"]), ScoreOptions(verifier_mode="sparse", tau=0.5)
        )
        high = pipeline.score_completion(
            make_inp(), 1, completion_for(["some other claim"]), ScoreOptions(verifier_mode="sparse", tau=0.95)
        )
        assert low.verifier == 1.0
        assert high.verifier == 0.0

    def test_judge_off_sets_excluded_flag(self, mock_stack):
        pipeline = make_pipeline(mock_stack)
        breakdown = pipeline.score_completion(
            make_inp(), 1, completion_for(["a true fact"]), ScoreOptions(judge=False)
        )
        assert breakdown.checklist == 0.0
        assert breakdown.diagnostics["checklist_excluded"] is True

    def test_no_judge_configured(self, mock_stack):
        pipeline = make_pipeline(mock_stack, judge=False)
        breakdown = pipeline.score_completion(make_inp(), 1, completion_for(["a true fact"]))
        assert breakdown.checklist == 0.0
        assert "no judge endpoint" in breakdown.diagnostics["checklist_note"]

    def test_malformed_judge_output_prices_zero(self, mock_stack, tmp_path):
        bad_judge = write_json(tmp_path / "bad_judge.json", [{"pattern": ".*", "reply": "not json"}])
        pipeline = RewardPipeline(
            reward_config=RewardConfig(),
            verifier=VerifierClient(VerifierConfig(base_url=f"mock:{mock_stack['verifier']}")),
            retriever=LocalPassageStore.from_jsonl(mock_stack["passages"]),
            judge=LLMClient(EndpointConfig(base_url=f"mock:{bad_judge}")),
            evidence_k=3,
        )
        breakdown = pipeline.score_completion(make_inp(), 1, completion_for(["a true fact"]))
        assert breakdown.checklist == 0.0
        assert "rejected" in breakdown.diagnostics["checklist_note"]

    def test_checklist_gate_failure(self, mock_stack, tmp_path):
        gate_no = dict(ALL_YES, complete_verifiable="No")
        judge = write_json(tmp_path / "gate_judge.json", [{"pattern": ".*", "reply": judge_reply([gate_no])}])
        pipeline = RewardPipeline(
            reward_config=RewardConfig(),
            verifier=VerifierClient(VerifierConfig(base_url=f"mock:{mock_stack['verifier']}")),
            retriever=LocalPassageStore.from_jsonl(mock_stack["passages"]),
            judge=LLMClient(EndpointConfig(base_url=f"mock:{judge}")),
            evidence_k=3,
        )
        breakdown = pipeline.score_completion(make_inp(), 1, completion_for(["a true fact"]))
        assert breakdown.checklist == 0.0

    def test_verifier_failure_tagged(self, mock_stack, tmp_path):
        empty_verifier = write_json(tmp_path / "empty_verifier.json", [])
        pipeline = RewardPipeline(
            reward_config=RewardConfig(),
            verifier=VerifierClient(VerifierConfig(base_url=f"mock:{empty_verifier}")),
            retriever=LocalPassageStore.from_jsonl(mock_stack["passages"]),
            judge=None,
            evidence_k=3,
        )
        with pytest.raises(StageFailure) as exc:
            pipeline.score_completion(make_inp(), 1, completion_for(["a true fact"]))
        assert exc.value.stage == "verifier"
        assert isinstance(exc.value.cause, UpstreamError)

    def test_retrieval_failure_tagged(self, mock_stack):
        class Broken:
            def retrieve(self, claim, k):
                raise RuntimeError("index corrupted")

        pipeline = RewardPipeline(
            reward_config=RewardConfig(),
            verifier=VerifierClient(VerifierConfig(base_url=f"mock:{mock_stack['verifier']}")),
            retriever=Broken(),
            judge=None,
            evidence_k=3,
        )
        with pytest.raises(StageFailure) as exc:
            pipeline.score_completion(make_inp(), 1, completion_for(["a true fact"]))
        assert exc.value.stage == "retrieval"

    def test_timings_account_for_wall(self, mock_stack):
        pipeline = make_pipeline(mock_stack)
        timings = Timings()
        pipeline.score_completion(make_inp(), 1, completion_for(["a true fact"]), timings=timings)
        accounted = timings.parse + timings.retrieval + timings.verify + timings.judge + timings.other
        assert accounted == pytest.approx(timings.wall, rel=0.05)


class TestScoreGroup:
    def test_group_advantages_zero_sum(self, mock_stack):
        pipeline = make_pipeline(mock_stack)
        completions = [
            completion_for(["a true fact"]),
            "<think>r</think><output>No verifiable claim</output>",
            "garbage with no tags",
        ]
        group, timings = pipeline.score_group("g1", make_inp(), 1, completions)
        assert len(group.rewards) == 3
        assert abs(sum(group.advantages)) < 1e-9
        assert group.rewards[0].total > group.rewards[1].total > group.rewards[2].total
        assert timings.wall > 0

    def test_empty_completions_rejected(self, mock_stack):
        pipeline = make_pipeline(mock_stack)
        with pytest.raises(ValueError):
            pipeline.score_group("g", make_inp(), 1, [])

    def test_per_snippet_max_mode(self, mock_stack):
        pipeline = make_pipeline(mock_stack, evidence_mode="per_snippet_max")
        breakdown = pipeline.score_completion(make_inp(), 1, completion_for(["a true fact"]))
        assert breakdown.verifier > 0
