"""Integration against the real reward service over HTTP.

The service runs as a `claimlab serve` subprocess with file-backed mock
endpoints, so the adapter exercises the exact wire contract a trainer would.
Includes the adapter-side acceptance checks: the 10x8 smoke run with exact
total/component agreement, reward-curve compatibility with the engine's
report command, and a 20-step toy GRPO loop on a tiny model.
"""

import csv
import json
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest

from trainer_adapter import AdapterConfig, ConfigMismatch, make_reward_fn

SCRIPTS = Path(__file__).resolve().parent.parent / "scripts"

JUDGE_ALL_YES = json.dumps(
    [
        {
            "id": "0",
            "checks": {
                "complete_verifiable": "Yes",
                "retrieval_relevant": "Yes",
                "qualifiers_sufficient": "Yes",
                "references_explicit": "Yes",
                "no_ungrounded_additions": "Yes",
            },
            "rationales": {},
        }
    ]
)


def write(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def service_url(tmp_path_factory):
    root = tmp_path_factory.mktemp("service")
    passages = root / "passages.jsonl"
    with open(passages, "w", encoding="utf-8") as fh:
        for u in range(1, 8):
            fh.write(json.dumps({"title": f"Entity{u}", "text": f"Entity{u} is known for many deeds."}) + "\n")
    verifier = write(
        root / "verifier.json",
        [
            {"claim_substring": "accurate", "probability": 0.9},
            {"claim_substring": "", "probability": 0.6},
        ],
    )
    judge_two = json.loads(JUDGE_ALL_YES) + [json.loads(JUDGE_ALL_YES)[0] | {"id": "1"}]
    judge = write(
        root / "judge.json",
        [
            {"pattern": r'\["[^"]*"\]\s*</subclaims>', "reply": JUDGE_ALL_YES},
            {"pattern": "</subclaims>", "reply": json.dumps(judge_two)},
        ],
    )
    config = write(
        root / "service.json",
        {
            "verifier": {"base_url": f"mock:{verifier}"},
            "judge": {"base_url": f"mock:{judge}"},
            "retrieval": {"backend": "local", "passages": str(passages), "k": 3},
        },
    )
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    proc = subprocess.Popen(
        [sys.executable, "-m", "claimlab.cli", "serve", "--config", config, "--port", str(port)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    url = f"http://127.0.0.1:{port}"
    deadline = time.time() + 20
    try:
        while time.time() < deadline:
            try:
                if httpx.get(url + "/v1/health", timeout=1.0).status_code == 200:
                    break
            except httpx.HTTPError:
                time.sleep(0.1)
        else:
            pytest.fail("reward service never became healthy")
        yield url
    finally:
        proc.send_signal(signal.SIGTERM)
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()


def test_adapter_scores_against_live_service(service_url):
    config = AdapterConfig(service_url=service_url, group_size=3)
    fn = make_reward_fn(config)
    record = {
        "question": "Tell me about Entity1.",
        "context": ["Entity1 performed deed 1 in year 1991."],
        "target": "Entity1 performed deed 2 in year 1992.",
        "label": 1,
    }
    completions = [
        '<think>s</think><output>["Entity1 made an accurate deed 2."]</output>',
        "<think>s</think><output>No verifiable claim</output>",
        "no tags",
    ]
    totals = fn(["p"] * 3, completions, metadata=[record])
    assert totals[0] > totals[1] > totals[2]
    assert abs(sum(fn.last_advantages)) < 1e-9
    for breakdown, total in zip(fn.last_groups[0].breakdowns, totals):
        assert total == breakdown["format"] + breakdown["verifier"] + breakdown["checklist"]


def test_config_pin_against_live_service(service_url):
    served = httpx.get(service_url + "/v1/config").json()["weights_hash"]
    fn = make_reward_fn(AdapterConfig(service_url=service_url, group_size=2, expected_weights_hash=served))
    assert fn.weights_hash == served
    with pytest.raises(ConfigMismatch):
        make_reward_fn(AdapterConfig(service_url=service_url, group_size=2, expected_weights_hash="0" * 64))


def test_smoke_run_10_prompts_k8(service_url, tmp_path):
    out = tmp_path / "rewards.csv"
    result = subprocess.run(
        [sys.executable, str(SCRIPTS / "smoke_reward_fn.py"),
         "--service-url", service_url, "--out", str(out), "--k", "8", "--prompts", "10"],
        capture_output=True, text=True, timeout=120,
    )
    assert result.returncode == 0, result.stderr
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 80  # k x 10 reward rows
    for row in rows:
        total = float(row["total"])
        components = float(row["format"]) + float(row["verifier"]) + float(row["checklist"])
        assert total == components  # exact: totals are the service-side sums
    steps = [json.loads(line) for line in (tmp_path / "rewards.csv.steps.jsonl").read_text().splitlines()]
    assert len(steps) == 10
    print("[ACCEPTANCE] adapter smoke run: PASS (80 reward rows, totals equal component sums exactly)")


def test_sparse_mode_smoke(service_url, tmp_path):
    out = tmp_path / "sparse.csv"
    result = subprocess.run(
        [sys.executable, str(SCRIPTS / "smoke_reward_fn.py"),
         "--service-url", service_url, "--out", str(out), "--k", "8", "--prompts", "3",
         "--verifier-mode", "sparse"],
        capture_output=True, text=True, timeout=120,
    )
    assert result.returncode == 0, result.stderr
    with open(out, newline="") as fh:
        assert all(float(row["verifier"]) in (0.0, 1.0) for row in csv.DictReader(fh))


def test_reward_curve_feeds_engine_report(service_url, tmp_path):
    out = tmp_path / "rewards.csv"
    subprocess.run(
        [sys.executable, str(SCRIPTS / "smoke_reward_fn.py"),
         "--service-url", service_url, "--out", str(out), "--k", "4", "--prompts", "5"],
        capture_output=True, text=True, timeout=120, check=True,
    )
    result = subprocess.run(
        [sys.executable, "-m", "claimlab.cli", "evaluate",
         "--reward-log", str(out) + ".steps.jsonl", "--out", str(tmp_path / "report")],
        capture_output=True, text=True, timeout=60,
    )
    assert result.returncode == 0, result.stderr
    curve = (tmp_path / "report.reward_curve.csv").read_text().splitlines()
    assert curve[0] == "step,reward_mean,reward_ema"
    assert len(curve) == 6


def test_toy_grpo_twenty_steps(service_url, tmp_path):
    result = subprocess.run(
        [sys.executable, str(SCRIPTS / "toy_grpo.py"),
         "--service-url", service_url, "--steps", "20", "--k", "8",
         "--max-new-tokens", "12", "--out", str(tmp_path / "toy.csv")],
        capture_output=True, text=True, timeout=480,
    )
    assert result.returncode == 0, result.stderr
    assert "toy GRPO loop completed: 20 steps" in result.stdout
    with open(tmp_path / "toy.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 160  # 20 steps x k=8
    print("[ACCEPTANCE] toy GRPO loop: PASS (20 steps on a tiny model, no errors)")
