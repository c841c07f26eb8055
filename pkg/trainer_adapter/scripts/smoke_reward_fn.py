#!/usr/bin/env python3
"""Smoke run: score 10 synthetic prompts x k completions against a running
reward service and write the per-completion reward-curve CSV.

    python scripts/smoke_reward_fn.py --service-url http://127.0.0.1:8080 \
        --out rewards.csv [--k 8] [--verifier-mode dense]

Exits nonzero on any service failure or contract mismatch.
"""

import argparse
import json
import sys

from trainer_adapter import AdapterConfig, make_reward_fn


def synthetic_completion(slot: int, entity: str) -> str:
    """Vary completion quality by slot so the group has reward spread."""
    if slot % 8 == 5:
        return "<think>nothing</think><output>No verifiable claim</output>"
    if slot % 8 == 6:
        return "<think>oops</think><output>not a list</output>"
    if slot % 8 == 7:
        return "free text, no tags"
    claims = [f"{entity} made an accurate deed {slot + 1}."]
    if slot % 2 == 0:
        claims.append(f"{entity} acted in year {1990 + slot}.")
    return "<think>steps</think><output>" + json.dumps(claims) + "</output>"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--service-url", default="http://127.0.0.1:8080")
    parser.add_argument("--out", default="rewards.csv")
    parser.add_argument("--k", type=int, default=8)
    parser.add_argument("--prompts", type=int, default=10)
    parser.add_argument("--verifier-mode", choices=["dense", "sparse"], default=None)
    args = parser.parse_args()

    config = AdapterConfig(
        service_url=args.service_url,
        group_size=args.k,
        verifier_mode=args.verifier_mode,
        reward_log=args.out,
    )
    reward_fn = make_reward_fn(config)
    print(f"service weights hash: {reward_fn.weights_hash}")

    for p in range(args.prompts):
        entity = f"Entity{p + 1}"
        record = {
            "question": f"Tell me about {entity}.",
            "context": [f"{entity} performed deed 1 in year 1991."],
            "target": f"{entity} performed deed 2 in year 1992.",
            "label": p % 2,
        }
        prompt = f"decompose the target sentence about {entity}"
        completions = [synthetic_completion(slot, entity) for slot in range(args.k)]
        totals = reward_fn([prompt] * args.k, completions, metadata=[record])
        advantages = reward_fn.last_advantages
        if args.verifier_mode == "sparse":
            for breakdown in reward_fn.last_groups[0].breakdowns:
                assert breakdown["verifier"] in (0.0, 1.0), breakdown
        print(
            f"prompt {p}: totals "
            + " ".join(f"{t:.3f}" for t in totals)
            + f" | advantage sum {sum(advantages):+.2e}"
        )

    print(f"wrote {args.prompts * args.k} reward rows -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
