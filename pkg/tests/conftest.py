"""Shared fixtures: a hermetic mock stack (decomposer, verifier, judge,
local passages) every integration test can build on."""

import pytest

from helpers import ALL_YES, completion_for, judge_reply, write_json, write_jsonl

PASSAGES = [
    {"title": "Mars", "text": "Mars is the fourth planet from the Sun.\n\nMars has two moons named Phobos and Deimos."},
    {"title": "Venus", "text": "Venus is the second planet from the Sun.\n\nVenus has no moons."},
    {"title": "Jupiter", "text": "Jupiter is the largest planet in the Solar System."},
]


@pytest.fixture()
def mock_stack(tmp_path):
    """File-backed mock endpoints plus a local passage index.

    The default verifier scores claims mentioning 'true' at 0.9 and 'false'
    at 0.2, with a 0.6 catch-all; the default judge answers all-Yes for one
    or two subclaims.
    """
    passages = write_jsonl(tmp_path / "passages.jsonl", PASSAGES)
    verifier = write_json(
        tmp_path / "verifier.json",
        [
            {"claim_substring": "true", "probability": 0.9},
            {"claim_substring": "false", "probability": 0.2},
            {"claim_substring": "", "probability": 0.6},
        ],
    )
    judge = write_json(
        tmp_path / "judge.json",
        [
            {"pattern": r'\["[^"]*"\]\s*</subclaims>', "reply": judge_reply([ALL_YES])},
            {"pattern": "</subclaims>", "reply": judge_reply([ALL_YES, ALL_YES])},
        ],
    )
    decomposer = write_json(
        tmp_path / "decomposer.json",
        [{"pattern": ".*", "reply": completion_for(["a true fact"])}],
    )
    return {
        "dir": tmp_path,
        "passages": passages,
        "verifier": verifier,
        "judge": judge,
        "decomposer": decomposer,
    }
