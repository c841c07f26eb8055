"""Command-line orchestration: batch decomposition, verification, teacher
distillation, the reward service, and report generation.

Output files are line-delimited JSON written in input order, free of
run-specific fields, so reruns under mock backends are byte-identical. Every
command writes a `<out>.manifest.json` sidecar with config/template hashes
and the dataset fingerprint. Exit codes: 0 success, 1 partial failures,
2 configuration error.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .corpus import Granularity, Label, build_window, load_dataset
from .errors import ClaimlabError, ConfigurationError, SchemaError
from .evalkit import (
    SentenceStructure,
    confusion,
    desiderata_scores,
    load_annotations,
    subclaim_stats,
)
from .evidence import LocalPassageStore, WebSearchClient, WebSearchConfig
from .gateway import EndpointConfig, LLMClient
from .manifest import build_manifest
from .prompting import (
    parse_decomposer_output,
    render_decomposition_prompt,
    template_hashes,
)
from .reports import (
    agreement_summary,
    agreement_table,
    metrics_table,
    reward_curve_csv,
    write_agreement_report,
    write_metrics_report,
)
from .rewards import RewardConfig, format_reward_from_checks
from .verify import VerifierClient, VerifierConfig, aggregate_response, aggregate_sentence

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def _read_json(path: str | Path, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{what} {path} is not valid JSON: {exc.msg}") from exc


def _load_endpoints(path: str | Path) -> dict:
    return _read_json(path, "endpoint config")


def _endpoint(endpoints: dict, role: str) -> EndpointConfig:
    if role not in endpoints:
        raise ConfigurationError(f"endpoint config has no {role!r} section", field=role)
    try:
        return EndpointConfig.from_json(endpoints[role])
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad {role} endpoint: {exc}", field=role) from exc


def _build_retriever(retrieval: dict, cache_only: bool = False):
    backend = retrieval.get("backend")
    if backend == "local":
        passages = retrieval.get("passages")
        if not passages:
            raise ConfigurationError("local retrieval needs a passages file", field="retrieval.passages")
        return LocalPassageStore.from_jsonl(passages), int(retrieval.get("k", 5))
    if backend == "web":
        fields = {k: v for k, v in retrieval.items() if k not in ("backend", "k")}
        if cache_only:
            fields["cache_only"] = True
        return WebSearchClient(WebSearchConfig.from_json(fields)), int(retrieval.get("k", 10))
    raise ConfigurationError(f"unknown retrieval backend {backend!r}", field="retrieval.backend")


def _existing_keys(path: Path, key_field: str = "id") -> set[str]:
    keys: set[str] = set()
    if path.exists():
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    keys.add(json.loads(line)[key_field])
    return keys


def _dump(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False) + "\n"


@click.group()
def main() -> None:
    """Decompose-then-verify factuality engine."""


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--schema", required=True, type=click.Choice(["sentence_level", "response_level"]))
@click.option("--endpoint-config", "endpoint_config", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--resume", is_flag=True, help="Skip records already present in --out.")
@click.option("--parallel", default=1, show_default=True)
@click.option("--preceding", "-p", default=2, show_default=True)
@click.option("--following", "-f", default=2, show_default=True)
def decompose(dataset, schema, endpoint_config, out, resume, parallel, preceding, following):
    """Run the decomposer over every sentence in each unit's labeled span."""
    try:
        endpoints = _load_endpoints(endpoint_config)
        decomposer = _endpoint(endpoints, "decomposer")
        units = load_dataset(dataset, schema)
    except (ConfigurationError, SchemaError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    out_path = Path(out)
    done = _existing_keys(out_path) if resume else set()
    client = LLMClient(decomposer)

    tasks = []
    for unit in units:
        for index in unit.span_indices:
            key = f"{unit.id}#{index}"
            if key in done:
                continue
            tasks.append((key, unit, index))

    def work(task):
        key, unit, index = task
        try:
            inp = build_window(unit.sentences, index, preceding, following, question=unit.question)
            bundle = render_decomposition_prompt(inp)
            completion = client.complete(bundle.system, bundle.user)
            parsed = parse_decomposer_output(completion)
            record = {
                "id": key,
                "unit_id": unit.id,
                "sentence_index": index,
                "question": unit.question,
                "target": inp.target,
                "context": list(inp.context),
                "context_indices": list(inp.context_indices),
                "total_sentences": inp.total_sentences,
                "label": unit.label.value,
                "granularity": unit.granularity.value,
                "outcome": parsed.outcome.value,
                "claims": list(parsed.claims),
                "reasoning": parsed.reasoning,
                "raw": completion,
                "checks": {
                    "tags_present": parsed.checks.tags_present,
                    "order_clean": parsed.checks.order_clean,
                    "list_parsed": parsed.checks.list_parsed,
                    "list_quality": parsed.checks.list_quality,
                },
            }
            return ("ok", key, record)
        except Exception as exc:
            return ("error", key, f"{type(exc).__name__}: {exc}")

    failures = 0
    mode = "a" if resume and out_path.exists() else "w"
    with open(out_path, mode, encoding="utf-8") as sink:
        if parallel > 1:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                results = list(pool.map(work, tasks))
        else:
            results = [work(t) for t in tasks]
        for status, key, payload in results:
            if status == "ok":
                sink.write(_dump(payload))
            else:
                failures += 1
                click.echo(f"record {key} failed: {payload}", err=True)

    manifest = build_manifest(
        command="decompose",
        config={
            "schema": schema,
            "preceding": preceding,
            "following": following,
            "parallel": parallel,
            "resume": resume,
            "sampling": {"temperature": decomposer.temperature, "top_p": decomposer.top_p},
        },
        template_hashes=template_hashes(),
        endpoints={"decomposer": decomposer.base_url},
        dataset_path=dataset,
        extra={"units": len(units), "records_written": len(tasks) - failures, "failures": failures},
    )
    manifest.add_output(out_path)
    manifest.write(str(out_path) + ".manifest.json")
    click.echo(f"decomposed {len(tasks) - failures}/{len(tasks)} records -> {out_path}")
    sys.exit(EXIT_PARTIAL if failures else EXIT_OK)


@main.command()
@click.option("--subclaims", required=True, type=click.Path(exists=True), help="Output of `decompose`.")
@click.option("--endpoint-config", "endpoint_config", required=True, type=click.Path(exists=True))
@click.option("--weights", type=click.Path(exists=True), help="Reward/threshold config JSON.")
@click.option("--tau", type=float, default=None, help="Override the support threshold.")
@click.option("--cache-only", is_flag=True, help="Serve web evidence from the cache only.")
@click.option("--out", required=True, type=click.Path())
def verify(subclaims, endpoint_config, weights, tau, cache_only, out):
    """Retrieve evidence, score every subclaim, aggregate unit labels, and
    write verdicts plus a metrics report."""
    try:
        endpoints = _load_endpoints(endpoint_config)
        if "verifier" not in endpoints:
            raise ConfigurationError("endpoint config has no 'verifier' section", field="verifier")
        verifier = VerifierClient(VerifierConfig.from_json(endpoints["verifier"]))
        if "retrieval" not in endpoints:
            raise ConfigurationError("endpoint config has no 'retrieval' section", field="retrieval")
        retriever, evidence_k = _build_retriever(endpoints["retrieval"], cache_only)
        reward_config = RewardConfig.load(weights) if weights else RewardConfig.default()
    except ConfigurationError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    tau = tau if tau is not None else reward_config.tau

    records = []
    with open(subclaims, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))

    # unit_id -> {gold, granularity, probs, claims, zero_claim sentences}
    units: dict[str, dict] = {}
    order: list[str] = []
    verdict_rows: list[dict] = []
    failures = 0
    for record in records:
        unit_id = record["unit_id"]
        if unit_id not in units:
            units[unit_id] = {
                "gold": record["label"],
                "granularity": record["granularity"],
                "probs": [],
                "claims": 0,
            }
            order.append(unit_id)
        for claim_index, claim in enumerate(record.get("claims", [])):
            try:
                evidence = retriever.retrieve(claim, evidence_k)
                probability = verifier.score_claim(claim, evidence.concatenated())
            except ClaimlabError as exc:
                failures += 1
                click.echo(f"claim {record['id']}#{claim_index} failed: {exc}", err=True)
                continue
            units[unit_id]["probs"].append(probability)
            units[unit_id]["claims"] += 1
            verdict_rows.append(
                {
                    "id": f"{record['id']}#{claim_index}",
                    "unit_id": unit_id,
                    "sentence_index": record["sentence_index"],
                    "claim_index": claim_index,
                    "claim": claim,
                    "probability": probability,
                    "label": (Label.SUPPORTED if probability >= tau else Label.NOT_SUPPORTED).value,
                    "evidence": [
                        {"source_id": s.source_id, "rank": s.rank, "text": s.text}
                        for s in evidence.snippets
                    ],
                }
            )

    unit_rows = []
    preds: list[str] = []
    golds: list[str] = []
    zero_claim_units: list[str] = []
    for unit_id in order:
        info = units[unit_id]
        if not info["probs"]:
            predicted = Label.NOT_SUPPORTED
            zero_claim_units.append(unit_id)
        elif info["granularity"] == Granularity.RESPONSE.value:
            predicted = aggregate_response(info["probs"])
        else:
            predicted = aggregate_sentence(info["probs"], tau)
        unit_rows.append(
            {
                "unit_id": unit_id,
                "granularity": info["granularity"],
                "gold": info["gold"],
                "predicted": predicted.value,
                "probabilities": info["probs"],
                "zero_claim": not info["probs"],
            }
        )
        preds.append(predicted.value)
        golds.append(info["gold"])

    summary = confusion(preds, golds)
    stats = subclaim_stats([units[u]["claims"] for u in order])
    out_path = Path(out)
    with open(out_path, "w", encoding="utf-8") as fh:
        for row in verdict_rows:
            fh.write(_dump(row))
    with open(str(out_path) + ".units.jsonl", "w", encoding="utf-8") as fh:
        for row in unit_rows:
            fh.write(_dump(row))
    metrics = {
        "confusion": summary.to_json(),
        "subclaims": stats,
        "tau": tau,
        "zero_claim_units": zero_claim_units,
    }
    with open(str(out_path) + ".metrics.json", "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")

    manifest = build_manifest(
        command="verify",
        config={"tau": tau, "weights_hash": reward_config.config_hash(), "cache_only": cache_only,
                "evidence_k": evidence_k},
        template_hashes=template_hashes(),
        endpoints={"verifier": endpoints["verifier"]["base_url"], "retrieval": endpoints["retrieval"]},
        dataset_path=subclaims,
        extra={"units": len(order), "claims": len(verdict_rows), "failures": failures},
    )
    for produced in (str(out_path), str(out_path) + ".units.jsonl", str(out_path) + ".metrics.json"):
        manifest.add_output(produced)
    manifest.write(str(out_path) + ".manifest.json")

    click.echo(
        f"verified {len(verdict_rows)} claims over {len(order)} units: "
        f"BAcc {summary.balanced_accuracy:.4f}, macro-F1 {summary.macro_f1:.4f}"
    )
    sys.exit(EXIT_PARTIAL if failures else EXIT_OK)


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--schema", required=True, type=click.Choice(["sentence_level", "response_level"]))
@click.option("--endpoint-config", "endpoint_config", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--resume", is_flag=True)
@click.option("--parallel", default=1, show_default=True)
@click.option("--preceding", "-p", default=2, show_default=True)
@click.option("--following", "-f", default=2, show_default=True)
def distill(dataset, schema, endpoint_config, out, resume, parallel, preceding, following):
    """Sample the teacher endpoint per sentence and keep exemplars whose
    completions are perfectly formatted; the rest go to a reject file."""
    try:
        endpoints = _load_endpoints(endpoint_config)
        teacher = _endpoint(endpoints, "teacher")
        units = load_dataset(dataset, schema)
    except (ConfigurationError, SchemaError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    out_path = Path(out)
    reject_path = Path(str(out_path) + ".rejects.jsonl")
    done = _existing_keys(out_path) | _existing_keys(reject_path) if resume else set()
    client = LLMClient(teacher)
    reward_config = RewardConfig.default()

    tasks = []
    for unit in units:
        for index in unit.span_indices:
            key = f"{unit.id}#{index}"
            if key not in done:
                tasks.append((key, unit, index))

    def work(task):
        key, unit, index = task
        try:
            inp = build_window(unit.sentences, index, preceding, following, question=unit.question)
            bundle = render_decomposition_prompt(inp)
            completion = client.complete(bundle.system, bundle.user)
            parsed = parse_decomposer_output(completion)
            reward = format_reward_from_checks(parsed.checks, reward_config)
            if reward < 1.0:
                return ("reject", key, {"id": key, "failed_checks": list(parsed.checks.failed), "raw": completion})
            return ("ok", key, {"id": key, "system": bundle.system, "user": bundle.user, "assistant": completion})
        except Exception as exc:
            return ("error", key, f"{type(exc).__name__}: {exc}")

    failures = kept = rejected = 0
    mode = "a" if resume and out_path.exists() else "w"
    reject_mode = "a" if resume and reject_path.exists() else "w"
    with open(out_path, mode, encoding="utf-8") as sink, open(reject_path, reject_mode, encoding="utf-8") as rejects:
        if parallel > 1:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                results = list(pool.map(work, tasks))
        else:
            results = [work(t) for t in tasks]
        for status, key, payload in results:
            if status == "ok":
                kept += 1
                sink.write(_dump(payload))
            elif status == "reject":
                rejected += 1
                rejects.write(_dump(payload))
            else:
                failures += 1
                click.echo(f"record {key} failed: {payload}", err=True)

    manifest = build_manifest(
        command="distill",
        config={"schema": schema, "preceding": preceding, "following": following,
                "sampling": {"temperature": teacher.temperature, "top_p": teacher.top_p}},
        template_hashes=template_hashes(),
        endpoints={"teacher": teacher.base_url},
        dataset_path=dataset,
        extra={"kept": kept, "rejected": rejected, "failures": failures},
    )
    manifest.add_output(out_path)
    manifest.add_output(reject_path)
    manifest.write(str(out_path) + ".manifest.json")
    click.echo(f"distilled {kept} exemplars ({rejected} rejected) -> {out_path}")
    sys.exit(EXIT_PARTIAL if failures else EXIT_OK)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              envvar="CLAIMLAB_SERVICE_CONFIG", show_envvar=True)
@click.option("--host", default="127.0.0.1", show_default=True, envvar="CLAIMLAB_HOST")
@click.option("--port", default=8080, show_default=True, envvar="CLAIMLAB_PORT", show_envvar=True)
@click.option("--weights", type=click.Path(exists=True), help="Override the config's weights file.")
@click.option("--tau", type=float, default=None, help="Override the support threshold.")
@click.option("--verifier-mode", "verifier_mode", type=click.Choice(["dense", "sparse"]), default=None)
def serve(config_path, host, port, weights, tau, verifier_mode):
    """Run the reward service until terminated; in-flight requests drain on
    shutdown."""
    import dataclasses

    import uvicorn

    from .service import ServiceSettings, create_app

    try:
        settings = ServiceSettings.load(config_path)
        reward_config = settings.reward_config
        if weights:
            reward_config = RewardConfig.load(weights)
        overrides = {}
        if tau is not None:
            overrides["tau"] = tau
        if verifier_mode is not None:
            overrides["verifier_mode"] = verifier_mode
        if overrides:
            reward_config = dataclasses.replace(reward_config, **overrides)
        settings = dataclasses.replace(settings, reward_config=reward_config)
        app = create_app(settings)
    except (ConfigurationError, ClaimlabError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    uvicorn.run(app, host=host, port=port)


def _metrics_rows(metrics_args: tuple[str, ...]) -> list[dict]:
    rows = []
    for arg in metrics_args:
        if "=" in arg:
            name, path = arg.split("=", 1)
        else:
            name, path = Path(arg).stem, arg
        data = _read_json(path, "metrics file")
        rows.append(
            {
                "dataset": name,
                "balanced_accuracy": data["confusion"]["balanced_accuracy"],
                "macro_f1": data["confusion"]["macro_f1"],
                "subclaim_mean": data.get("subclaims", {}).get("mean"),
            }
        )
    return rows


def _load_structure(path: str) -> dict[str, list[SentenceStructure]]:
    data = _read_json(path, "structure file")
    models = data.get("models", data)
    return {
        model: [
            SentenceStructure(sentence_id=s["sentence_id"], subclaim_ids=tuple(s.get("subclaim_ids", [])))
            for s in sentences
        ]
        for model, sentences in models.items()
    }


@main.command()
@click.option("--metrics", multiple=True, help="Metrics JSON from `verify`, optionally name=path.")
@click.option("--annotations", type=click.Path(exists=True), help="Annotation records JSONL.")
@click.option("--structure", type=click.Path(exists=True), help="Decomposition structure JSON.")
@click.option("--reward-log", "reward_log", type=click.Path(exists=True), help="JSONL of {step, reward}.")
@click.option("--out", required=True, type=click.Path(), help="Report path prefix.")
def evaluate(metrics, annotations, structure, reward_log, out):
    """Emit evaluation reports: per-dataset metrics table, desiderata scores,
    and reward-curve CSV series."""
    wrote: list[str] = []
    try:
        if metrics:
            rows = _metrics_rows(metrics)
            wrote += [str(p) for p in write_metrics_report(rows, str(out) + ".metrics")]
            click.echo(metrics_table(rows))
        if annotations and structure:
            report = desiderata_scores(load_annotations(annotations), _load_structure(structure))
            path = Path(str(out) + ".desiderata.json")
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(report.to_json(), fh, indent=2, sort_keys=True)
                fh.write("\n")
            wrote.append(str(path))
            for model, scores in report.scores.items():
                click.echo(f"{model}: " + ", ".join(f"{k}={v:.2f}" for k, v in sorted(scores.items())))
        if reward_log:
            entries = []
            with open(reward_log, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        entries.append(json.loads(line))
            path = reward_curve_csv(entries, str(out) + ".reward_curve.csv")
            wrote.append(str(path))
    except (ConfigurationError, SchemaError, KeyError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if not wrote:
        click.echo("nothing to evaluate: pass --metrics, --annotations/--structure, or --reward-log", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo("wrote: " + ", ".join(wrote))


@main.command()
@click.option("--annotations", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="Report path prefix.")
def agreement(annotations, out):
    """Inter-annotator agreement statistics per desideratum."""
    try:
        summary = agreement_summary(load_annotations(annotations))
    except (SchemaError, ValueError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    paths = write_agreement_report(summary, str(out) + ".agreement")
    click.echo(agreement_table(summary))
    click.echo("wrote: " + ", ".join(str(p) for p in paths))


if __name__ == "__main__":
    main()
