#!/usr/bin/env python3
"""Regenerate tests/data/format_golden.jsonl: 200 adversarial completions
with construction-derived structural check booleans and format rewards.

The expected values come from how each string is assembled (which blocks are
present, in what order, with which body), never from the parser under test.
Rewards are the weighted sum 0.40/0.10/0.40/0.10 over (tags_present,
order_clean, list_parsed, list_quality), accumulated in that order.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "format_golden.jsonl"
WEIGHTS = (0.40, 0.10, 0.40, 0.10)

# (body text, parses as string list or sentinel, quality) given the block exists
BODIES = [
    ('["a"]', True, True),
    ('["alpha", "beta"]', True, True),
    ('["Harrison Ford was born on July 13, 1942.", "He said \\"yes\\"."]', True, True),
    ('["Ünïcode claims 漢字", "second"]', True, True),
    ("['single', 'quoted']", True, True),
    ('["trailing", "comma",]', True, True),
    ('\n  ["padded", "list"]\n', True, True),
    ("[]", True, False),
    ('["a", ""]', True, False),
    ('["a", "   "]', True, False),
    ("[1, 2]", False, False),
    ('{"a": "b"}', False, False),
    ("just prose, no list at all", False, False),
    ('["unterminated", "json"', False, False),
    ('[__import__("os").getcwd()]', False, False),
    ('[["nested"]]', False, False),
    ("", False, False),
    ("No verifiable claim", True, True),
    ("Cannot be decontextualized", True, True),
    ("  No verifiable claim  ", True, True),
    ("no verifiable claim", True, False),
    ("NO VERIFIABLE CLAIM", True, False),
    ('"No verifiable claim"', True, False),
    ('["No verifiable claim"]', True, False),
    ("['Cannot be decontextualized']", True, False),
]

THINKS = ["r", "STEP 1: reason.\nSTEP 2: rewrite.", "short", ""]
JUNK = ["Sure thing!", "Here is my answer:", "I hope this helps.", "####"]

# structure -> (template, tags_present, order_clean)
# {t} think body, {b} output body, {j} junk
STRUCTURES = [
    ("clean", "<think>{t}</think><output>{b}</output>", True, True),
    ("clean_ws", "  <think>{t}</think>\n<output>{b}</output>\n", True, True),
    ("reversed", "<output>{b}</output><think>{t}</think>", True, False),
    ("prefix_junk", "{j} <think>{t}</think><output>{b}</output>", True, False),
    ("suffix_junk", "<think>{t}</think><output>{b}</output> {j}", True, False),
    ("middle_junk", "<think>{t}</think> {j} <output>{b}</output>", True, False),
    ("double_think", "<think>{t}</think><think>extra</think><output>{b}</output>", True, False),
    ("double_output", '<think>{t}</think><output>{b}</output><output>["x"]</output>', True, False),
    ("missing_think", "<output>{b}</output>", False, False),
]

NO_OUTPUT = [
    ("missing_output", "<think>{t}</think>", True),  # uses think, no output block
    ("missing_output_junk", "<think>{t}</think> {j}", True),
    ("no_tags", "{j} {j}", False),
    ("empty", "", False),
]

WORKED_EXAMPLES = [
    ('<think>r</think><output>["a"]</output>', (True, True, True, True)),
    ("<think>r</think>there is no output block here", (False, False, False, False)),
    ("<think>r</think><output>this body does not parse</output>", (True, True, False, False)),
]


def reward(checks):
    total = 0.0
    for w, ok in zip(WEIGHTS, checks):
        total += w * (1.0 if ok else 0.0)
    return total


def main():
    rng = random.Random(1729)
    entries = []

    for completion, checks in WORKED_EXAMPLES:
        entries.append({"completion": completion, "checks": list(checks)})

    # full cross product of structures x bodies, subsampled to fill 200
    combos = []
    for name, template, tags, order in STRUCTURES:
        for body, parsed, quality in BODIES:
            if "</output>" in body:
                continue
            combos.append((name, template, tags, order, body, parsed, quality))
    rng.shuffle(combos)

    for name, template, tags, order, body, parsed, quality in combos:
        text = template.format(t=rng.choice(THINKS), b=body, j=rng.choice(JUNK))
        entries.append({"completion": text, "checks": [tags, order, parsed, quality]})
        if len(entries) >= 188:
            break

    blanks = ["", " ", "\n\t"]
    for name, template, think_present in NO_OUTPUT:
        for i in range(3):
            if name == "empty":
                text = blanks[i]
            else:
                text = template.format(t=THINKS[i % len(THINKS)], j=JUNK[i % len(JUNK)])
            entries.append({"completion": text, "checks": [False, False, False, False]})

    assert len(entries) == 200, len(entries)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", encoding="utf-8") as fh:
        for entry in entries:
            entry["reward"] = reward(entry["checks"])
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    print(f"wrote {len(entries)} entries -> {OUT}")


if __name__ == "__main__":
    main()
