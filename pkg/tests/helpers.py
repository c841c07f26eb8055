"""Plain helpers shared across test modules."""

import json

from claimlab.prompting import CHECKLIST_CRITERIA

ALL_YES = {c: "Yes" for c in CHECKLIST_CRITERIA}


def write_json(path, data):
    path.write_text(json.dumps(data, ensure_ascii=False), encoding="utf-8")
    return str(path)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return str(path)


def completion_for(claims):
    return "<think>steps</think><output>" + json.dumps(claims) + "</output>"


def judge_reply(checks_list):
    items = [
        {"id": str(i), "checks": checks, "rationales": {k: "grounded" for k in checks}}
        for i, checks in enumerate(checks_list)
    ]
    return json.dumps(items)
