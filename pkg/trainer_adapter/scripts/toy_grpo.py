#!/usr/bin/env python3
"""Toy GRPO loop on a tiny randomly-initialized GPT-2 against a running
reward service. Demonstrates the adapter inside a real policy-gradient step;
makes no quality claim (a fresh tiny model emits noise and mostly earns
format-reward zeros).

    python scripts/toy_grpo.py --service-url http://127.0.0.1:8080 --steps 20

Requires the [smoke] extra (torch, transformers). Exits 0 when all steps
complete.
"""

import argparse
import copy
import sys

import torch
from transformers import GPT2Config, GPT2LMHeadModel

from trainer_adapter import AdapterConfig, make_reward_fn

VOCAB = 97  # printable ASCII 32..126 -> ids 1..95, 0 is pad/unk, 96 unused
PAD = 0


def encode(text: str) -> list[int]:
    return [ord(c) - 31 if 32 <= ord(c) <= 126 else PAD for c in text]


def decode(ids) -> str:
    return "".join(chr(i + 31) if 1 <= i <= 95 else " " for i in ids)


def tiny_model(seed: int) -> GPT2LMHeadModel:
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=VOCAB,
        n_positions=256,
        n_embd=64,
        n_layer=2,
        n_head=2,
        pad_token_id=PAD,
    )
    return GPT2LMHeadModel(config)


def sequence_logprob(model: GPT2LMHeadModel, full_ids: torch.Tensor, prompt_len: int) -> torch.Tensor:
    """Sum of token log-probabilities over the completion positions."""
    logits = model(full_ids.unsqueeze(0)).logits[0]
    log_probs = torch.log_softmax(logits, dim=-1)
    targets = full_ids[prompt_len:]
    rows = torch.arange(prompt_len - 1, full_ids.shape[0] - 1)
    return log_probs[rows, targets].sum()


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--service-url", default="http://127.0.0.1:8080")
    parser.add_argument("--steps", type=int, default=20)
    parser.add_argument("--prompts-per-step", type=int, default=1)
    parser.add_argument("--k", type=int, default=8)
    parser.add_argument("--max-new-tokens", type=int, default=16)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="toy_grpo_rewards.csv")
    args = parser.parse_args()

    model = tiny_model(args.seed)
    reference = copy.deepcopy(model).eval()
    for p in reference.parameters():
        p.requires_grad_(False)
    optimizer = torch.optim.AdamW(model.parameters(), lr=args.lr)

    config = AdapterConfig(service_url=args.service_url, group_size=args.k, reward_log=args.out)
    reward_fn = make_reward_fn(config)
    print(f"service weights hash: {reward_fn.weights_hash}")

    for step in range(args.steps):
        optimizer.zero_grad()
        step_loss = torch.zeros(())
        mean_total = 0.0
        for g in range(args.prompts_per_step):
            entity = f"Entity{(step * args.prompts_per_step + g) % 7 + 1}"
            record = {
                "question": f"Tell me about {entity}.",
                "context": [f"{entity} performed deed 1 in year 1991."],
                "target": f"{entity} performed deed 2 in year 1992.",
                "label": (step + g) % 2,
            }
            prompt_text = f"decompose: {record['target']} "
            prompt_ids = torch.tensor(encode(prompt_text), dtype=torch.long)

            with torch.no_grad():
                generated = model.generate(
                    prompt_ids.unsqueeze(0).repeat(args.k, 1),
                    do_sample=True,
                    max_new_tokens=args.max_new_tokens,
                    pad_token_id=PAD,
                )
            completions = [decode(row[prompt_ids.shape[0]:].tolist()) for row in generated]

            totals = reward_fn([prompt_text] * args.k, completions, metadata=[record])
            advantages = torch.tensor(reward_fn.last_advantages, dtype=torch.float32)
            mean_total += sum(totals) / len(totals)

            for slot in range(args.k):
                full = generated[slot]
                logp = sequence_logprob(model, full, prompt_ids.shape[0])
                with torch.no_grad():
                    logp_ref = sequence_logprob(reference, full, prompt_ids.shape[0])
                ratio = torch.exp(logp - logp_ref)
                step_loss = step_loss - ratio * advantages[slot]
        step_loss = step_loss / (args.prompts_per_step * args.k)
        step_loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), 1.0)
        optimizer.step()
        print(
            f"step {step + 1}/{args.steps}: mean reward "
            f"{mean_total / args.prompts_per_step:.3f}, loss {float(step_loss):+.4f}"
        )

    print(f"toy GRPO loop completed: {args.steps} steps, reward log -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
