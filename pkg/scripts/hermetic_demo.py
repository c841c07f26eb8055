#!/usr/bin/env python3
"""End-to-end hermetic demo: build a synthetic labeled corpus with scripted
mock endpoints, run decompose -> verify -> evaluate through the CLI, then
price one rollout group through the reward service.

Usage: python scripts/hermetic_demo.py [workdir]   (default: ./demo_run)
Everything is file-backed; no network is touched.
"""

import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "tests"))

from click.testing import CliRunner
from fastapi.testclient import TestClient

from claimlab.cli import main as cli_main
from claimlab.service import ServiceSettings, create_app
from synth import build_synthetic


def run(runner, args):
    print(f"$ claimlab {' '.join(args)}")
    result = runner.invoke(cli_main, args, catch_exceptions=False)
    print(result.output)
    if result.exit_code != 0:
        sys.exit(result.exit_code)


def main():
    workdir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_run").resolve()
    fixtures = build_synthetic(workdir / "fixtures")
    decomp = workdir / "decomp.jsonl"
    verdicts = workdir / "verdicts.jsonl"

    runner = CliRunner()
    run(runner, [
        "decompose", "--dataset", fixtures["dataset"], "--schema", "sentence_level",
        "--endpoint-config", fixtures["endpoints"], "--out", str(decomp),
    ])
    run(runner, [
        "verify", "--subclaims", str(decomp),
        "--endpoint-config", fixtures["endpoints"], "--out", str(verdicts),
    ])
    run(runner, [
        "evaluate", "--metrics", f"synthetic={verdicts}.metrics.json",
        "--out", str(workdir / "report"),
    ])
    print(Path(f"{workdir}/report.metrics.txt").read_text())

    settings = ServiceSettings.from_json(
        {
            "verifier": {"base_url": f"mock:{fixtures['verifier']}"},
            "retrieval": {"backend": "local", "passages": fixtures["passages"], "k": 3},
        }
    )
    app = create_app(settings)
    body = {
        "input": {
            "question": "Tell me about Entity1.",
            "context": ["Entity1 performed deed 1 in year 1991."],
            "target": "Entity1 performed deed 2 in year 1992.",
            "label": 1,
        },
        "completions": [
            '<think>steps</think><output>["Entity1 made an accurate deed 2."]</output>',
            "<think>steps</think><output>No verifiable claim</output>",
            "malformed completion",
        ],
    }
    with TestClient(app) as client:
        data = client.post("/v1/score", json=body).json()
    print("reward service sample group:")
    for breakdown, advantage in zip(data["rewards"], data["advantages"]):
        print(
            f"  total={breakdown['total']:.3f} "
            f"(format={breakdown['format']:.2f}, verifier={breakdown['verifier']:.3f}, "
            f"checklist={breakdown['checklist']:.2f})  advantage={advantage:+.3f}"
        )
    print(f"\nartifacts in {workdir}")


if __name__ == "__main__":
    main()
