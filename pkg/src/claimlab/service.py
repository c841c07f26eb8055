"""HTTP service exposing reward scoring and group advantages to RL trainers.

Stateless: one POST /v1/score request prices one rollout group. Downstream
failures surface as 502 with the failing stage named; body validation errors
surface as 400 with the offending field path.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .corpus import DecompositionInput
from .errors import ConfigurationError
from .evidence import LocalPassageStore, WebSearchClient, WebSearchConfig
from .gateway import EndpointConfig, LLMClient
from .pipeline import RewardPipeline, ScoreOptions, StageFailure
from .prompting import template_hashes
from .rewards import RewardConfig
from .verify import VerifierClient, VerifierConfig

logger = logging.getLogger("claimlab.service")


@dataclass
class ServiceSettings:
    reward_config: RewardConfig
    verifier: VerifierConfig
    retrieval: dict
    judge: EndpointConfig | None = None
    evidence_mode: str = "concat"

    @classmethod
    def load(cls, path: str | Path) -> "ServiceSettings":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read service config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"service config is not valid JSON: {exc.msg}") from exc
        return cls.from_json(data, base_dir=Path(path).parent)

    @classmethod
    def from_json(cls, data: dict, base_dir: Path | None = None) -> "ServiceSettings":
        base = base_dir or Path(".")

        weights = data.get("weights")
        if weights is None:
            reward_config = RewardConfig.default()
        elif isinstance(weights, str):
            reward_config = RewardConfig.load(base / weights if not Path(weights).is_absolute() else weights)
        elif isinstance(weights, dict):
            reward_config = RewardConfig.from_json(weights)
        else:
            raise ConfigurationError("weights must be a path or an object", field="weights")

        if "verifier" not in data:
            raise ConfigurationError("service config needs a verifier section", field="verifier")
        verifier = VerifierConfig.from_json(data["verifier"])

        if "retrieval" not in data:
            raise ConfigurationError("service config needs a retrieval section", field="retrieval")
        retrieval = dict(data["retrieval"])
        backend = retrieval.get("backend")
        if backend not in ("local", "web"):
            raise ConfigurationError(f"retrieval backend {backend!r}", field="retrieval.backend")

        judge = EndpointConfig.from_json(data["judge"]) if data.get("judge") else None
        return cls(
            reward_config=reward_config,
            verifier=verifier,
            retrieval=retrieval,
            judge=judge,
            evidence_mode=data.get("evidence_mode", "concat"),
        )


class ScoreInputModel(BaseModel):
    question: str
    context: list[str] = Field(default_factory=list)
    target: str
    label: Literal[0, 1]
    context_indices: list[int] | None = None
    target_index: int | None = None
    total_sentences: int | None = None

    def to_decomposition_input(self) -> DecompositionInput:
        if self.context_indices and self.target_index and self.total_sentences:
            return DecompositionInput(
                question=self.question,
                context=tuple(self.context),
                context_indices=tuple(self.context_indices),
                target=self.target,
                target_index=self.target_index,
                total_sentences=self.total_sentences,
            )
        # Without window metadata, lay the context out before the target and
        # show no truncation markers.
        m = len(self.context)
        return DecompositionInput(
            question=self.question,
            context=tuple(self.context),
            context_indices=tuple(range(1, m + 1)),
            target=self.target,
            target_index=m + 1,
            total_sentences=m + 1,
        )


class ScoreOptionsModel(BaseModel):
    verifier_mode: Literal["dense", "sparse"] | None = None
    tau: float | None = Field(default=None, ge=0.0, le=1.0)
    judge: bool | None = None


class ScoreRequestModel(BaseModel):
    input: ScoreInputModel
    completions: list[str] = Field(min_length=1)
    options: ScoreOptionsModel = Field(default_factory=ScoreOptionsModel)


def build_pipeline(settings: ServiceSettings) -> tuple[RewardPipeline, dict]:
    retrieval = settings.retrieval
    backend = retrieval["backend"]
    if backend == "local":
        passages = retrieval.get("passages")
        if not passages:
            raise ConfigurationError("local retrieval needs a passages file", field="retrieval.passages")
        retriever = LocalPassageStore.from_jsonl(passages)
        retrieval_info = {"backend": "local", "index": retriever.manifest()}
    else:
        web_keys = {k: v for k, v in retrieval.items() if k not in ("backend", "k")}
        retriever = WebSearchClient(WebSearchConfig.from_json(web_keys))
        retrieval_info = {"backend": "web", "provider": retriever.config.provider}
    evidence_k = int(retrieval.get("k", 5))
    judge = LLMClient(settings.judge) if settings.judge else None
    pipeline = RewardPipeline(
        reward_config=settings.reward_config,
        verifier=VerifierClient(settings.verifier),
        retriever=retriever,
        judge=judge,
        evidence_k=evidence_k,
        evidence_mode=settings.evidence_mode,
    )
    return pipeline, retrieval_info


def create_app(settings: ServiceSettings) -> FastAPI:
    pipeline, retrieval_info = build_pipeline(settings)
    app = FastAPI(title="claimlab reward service")
    app.state.pipeline = pipeline
    app.state.settings = settings

    @app.exception_handler(RequestValidationError)
    def validation_handler(request: Request, exc: RequestValidationError) -> JSONResponse:
        errors = []
        for err in exc.errors():
            loc = [str(part) for part in err.get("loc", ()) if part != "body"]
            errors.append({"field": ".".join(loc), "message": err.get("msg", "invalid")})
        return JSONResponse(status_code=400, content={"error": "invalid request", "details": errors})

    @app.post("/v1/score")
    def handle_score(payload: ScoreRequestModel) -> JSONResponse:
        # Content-derived run id: identical requests score identically and
        # share a log identity.
        blob = json.dumps(payload.model_dump(), sort_keys=True).encode("utf-8")
        run_id = hashlib.sha256(blob).hexdigest()[:12]
        try:
            inp = payload.input.to_decomposition_input()
        except ValueError as exc:
            return JSONResponse(
                status_code=400,
                content={"error": "invalid request", "details": [{"field": "input", "message": str(exc)}]},
            )
        options = ScoreOptions(
            verifier_mode=payload.options.verifier_mode,
            tau=payload.options.tau,
            judge=payload.options.judge,
        )
        logger.info(
            "score run=%s k=%d label=%d", run_id, len(payload.completions), payload.input.label
        )
        try:
            group, timings = pipeline.score_group(
                run_id, inp, payload.input.label, payload.completions, options
            )
        except StageFailure as exc:
            logger.error("score run=%s failed at stage %s: %s", run_id, exc.stage, exc.cause)
            return JSONResponse(
                status_code=502,
                content={"error": str(exc.cause), "stage": exc.stage, "run_id": run_id},
            )
        response = {
            "run_id": run_id,
            "rewards": [b.to_json() for b in group.rewards],
            "advantages": list(group.advantages),
            "timings": timings.to_json(),
        }
        logger.info("score run=%s done totals=%s", run_id, [b.total for b in group.rewards])
        return JSONResponse(content=response)

    @app.get("/v1/health")
    def handle_health() -> dict:
        downstream = {"verifier": pipeline.verifier.probe()}
        if pipeline.judge is not None:
            downstream["judge"] = pipeline.judge.probe()
        retriever = pipeline.retriever
        if isinstance(retriever, LocalPassageStore):
            downstream["retrieval"] = len(retriever) > 0
        elif isinstance(retriever, WebSearchClient):
            downstream["retrieval"] = retriever.probe()
        else:
            downstream["retrieval"] = True
        status = "ok" if all(downstream.values()) else "degraded"
        return {"status": status, "downstream": downstream}

    @app.get("/v1/config")
    def handle_config() -> dict:
        cfg = settings.reward_config
        return {
            "weights": cfg.to_json(),
            "weights_hash": cfg.config_hash(),
            "template_hashes": template_hashes(),
            "evidence": {"mode": settings.evidence_mode, **retrieval_info},
            "endpoints": {
                "verifier": settings.verifier.base_url,
                "judge": settings.judge.base_url if settings.judge else None,
            },
        }

    return app
