"""Report emission: plain-text tables, JSON, and CSV plot series.

The evaluation table lists BAcc / macro-F1 / subclaim count per dataset; the
agreement table lists three-way percent agreement, Fleiss' kappa, and the
pairwise percent/kappa/Pearson statistics per desideratum. Reward logs become
step/mean/EMA CSV series.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

from .evalkit import AnnotationRecord, fleiss_kappa, pairwise_agreement, three_way_agreement


def _fmt(value: object, width: int = 8) -> str:
    if value is None:
        return "NA".rjust(width)
    if isinstance(value, float):
        return f"{value:.2f}".rjust(width)
    return str(value).rjust(width)


def metrics_table(rows: Sequence[dict]) -> str:
    """Rows: {dataset, balanced_accuracy, macro_f1, subclaim_mean}."""
    header = f"{'Dataset':<24}{'BAcc':>8}{'F1':>8}{'SC':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row['dataset']:<24}"
            + _fmt(100.0 * row["balanced_accuracy"])
            + _fmt(100.0 * row["macro_f1"])
            + _fmt(row.get("subclaim_mean"))
        )
    return "\n".join(lines) + "\n"


def write_metrics_report(rows: Sequence[dict], out_prefix: str | Path) -> list[Path]:
    json_path = Path(f"{out_prefix}.json")
    txt_path = Path(f"{out_prefix}.txt")
    csv_path = Path(f"{out_prefix}.csv")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(list(rows), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(metrics_table(rows))
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "balanced_accuracy", "macro_f1", "subclaim_mean"])
        for row in rows:
            writer.writerow(
                [row["dataset"], row["balanced_accuracy"], row["macro_f1"], row.get("subclaim_mean", "")]
            )
    return [json_path, txt_path, csv_path]


def agreement_summary(records: Iterable[AnnotationRecord]) -> dict:
    """Per-desideratum agreement statistics over annotators who rated every
    item of that desideratum."""
    by_desideratum: dict[str, dict[str, dict[str, int]]] = defaultdict(dict)
    for record in records:
        by_desideratum[record.desideratum.value].setdefault(record.item_id, {})[
            record.annotator_id
        ] = record.value

    summary: dict[str, dict] = {}
    for desideratum, items in sorted(by_desideratum.items()):
        annotators = sorted({a for votes in items.values() for a in votes})
        complete_items = [
            item for item, votes in sorted(items.items()) if set(votes) == set(annotators)
        ]
        if not complete_items or len(annotators) < 2:
            summary[desideratum] = {"items": len(items), "error": "insufficient complete items"}
            continue
        columns = [
            [items[item][annotator] for item in complete_items] for annotator in annotators
        ]
        categories = sorted({v for col in columns for v in col} | {0, 1})
        matrix = [
            [sum(1 for col in columns if col[i] == c) for c in categories]
            for i in range(len(complete_items))
        ]
        pairs = {}
        for i in range(len(annotators)):
            for j in range(i + 1, len(annotators)):
                pairs[f"{annotators[i]}-{annotators[j]}"] = pairwise_agreement(
                    columns[i], columns[j]
                )
        summary[desideratum] = {
            "items": len(complete_items),
            "three_way_percent": three_way_agreement(columns),
            "fleiss_kappa": fleiss_kappa(matrix),
            "pairwise": pairs,
        }
    return summary


def agreement_table(summary: dict) -> str:
    header = f"{'Desideratum':<16}{'3-way %':>9}{'Fleiss k':>10}  pairwise (% / kappa / r)"
    lines = [header, "-" * len(header)]
    for desideratum, stats in summary.items():
        if "error" in stats:
            lines.append(f"{desideratum:<16} {stats['error']}")
            continue
        pair_bits = []
        for pair, values in stats["pairwise"].items():
            r = values["pearson_r"]
            r_txt = "NA" if r is None else f"{r:.2f}"
            pair_bits.append(
                f"{pair}: {values['percent']:.1f} / {values['cohen_kappa']:.2f} / {r_txt}"
            )
        lines.append(
            f"{desideratum:<16}"
            + _fmt(stats["three_way_percent"], 9)
            + _fmt(stats["fleiss_kappa"], 10)
            + "  "
            + "; ".join(pair_bits)
        )
    return "\n".join(lines) + "\n"


def write_agreement_report(summary: dict, out_prefix: str | Path) -> list[Path]:
    json_path = Path(f"{out_prefix}.json")
    txt_path = Path(f"{out_prefix}.txt")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(agreement_table(summary))
    return [json_path, txt_path]


def reward_curve_csv(
    rewards: Sequence[dict], out_path: str | Path, ema_alpha: float = 0.1
) -> Path:
    """Emit step/reward/EMA series from logged training rewards, ordered by
    ascending step. Rows: {step, reward}."""
    out_path = Path(out_path)
    ordered = sorted(rewards, key=lambda r: r["step"])
    ema: float | None = None
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "reward_mean", "reward_ema"])
        for row in ordered:
            value = float(row["reward"])
            ema = value if ema is None else ema_alpha * value + (1 - ema_alpha) * ema
            writer.writerow([row["step"], value, ema])
    return out_path
