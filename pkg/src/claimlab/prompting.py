"""Prompt rendering and structured parsing of decomposer/judge outputs.

Templates are versioned text assets with named substitution slots; their
sha256 hashes go into run manifests. The decomposer parser is total: any
input string maps to claims, a sentinel, or a parse failure carrying the
four structural check booleans that the format reward prices.
"""

from __future__ import annotations

import ast
import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

from .corpus import DecompositionInput
from .errors import JudgeParseError

SENTINEL_NO_CLAIM = "No verifiable claim"
SENTINEL_NO_DECONTEXT = "Cannot be decontextualized"
TRUNCATION_MARKER = "[...]"

CHECKLIST_CRITERIA = (
    "complete_verifiable",
    "retrieval_relevant",
    "qualifiers_sufficient",
    "references_explicit",
    "no_ungrounded_additions",
)
# Per the checklist contract, only these two criteria may answer NA.
NA_ALLOWED = {"qualifiers_sufficient", "references_explicit"}


def _load_template(name: str) -> str:
    return resources.files("claimlab.templates").joinpath(name).read_text(encoding="utf-8")


DECOMPOSITION_SYSTEM = _load_template("decomposition_system.txt")
DECOMPOSITION_USER = _load_template("decomposition_user.txt")
CHECKLIST_TEMPLATE = _load_template("checklist.txt")

_SLOT = re.compile(r"\{(question|context|sentence|subclaims)\}")


def _fill(template: str, **slots: str) -> str:
    return _SLOT.sub(lambda m: slots[m.group(1)], template)


def template_hashes() -> dict[str, str]:
    """sha256 of each template asset, for manifest provenance."""
    return {
        name: hashlib.sha256(text.encode("utf-8")).hexdigest()
        for name, text in (
            ("decomposition_system", DECOMPOSITION_SYSTEM),
            ("decomposition_user", DECOMPOSITION_USER),
            ("checklist", CHECKLIST_TEMPLATE),
        )
    }


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str


def render_context_block(inp: DecompositionInput) -> str:
    """The window in reading order (target included in place), with a
    truncation marker at each edge beyond which response material exists."""
    indexed = sorted(
        [*zip(inp.context_indices, inp.context), (inp.target_index, inp.target)]
    )
    parts = [text for _, text in indexed]
    if inp.truncated_left:
        parts.insert(0, TRUNCATION_MARKER)
    if inp.truncated_right:
        parts.append(TRUNCATION_MARKER)
    return " ".join(parts)


def render_decomposition_prompt(inp: DecompositionInput) -> PromptBundle:
    user = _fill(
        DECOMPOSITION_USER,
        question=inp.question,
        context=render_context_block(inp),
        sentence=inp.target,
    )
    return PromptBundle(system=DECOMPOSITION_SYSTEM, user=user)


def render_checklist_prompt(inp: DecompositionInput, subclaims: list[str]) -> PromptBundle:
    if not subclaims:
        raise ValueError("checklist prompt requires at least one subclaim")
    user = _fill(
        CHECKLIST_TEMPLATE,
        question=inp.question,
        context=render_context_block(inp),
        sentence=inp.target,
        subclaims=json.dumps(subclaims, ensure_ascii=False),
    )
    return PromptBundle(system="", user=user)


class Outcome(str, Enum):
    CLAIMS = "claims"
    NO_VERIFIABLE_CLAIM = "no_verifiable_claim"
    CANNOT_BE_DECONTEXTUALIZED = "cannot_be_decontextualized"
    PARSE_FAILURE = "parse_failure"


@dataclass(frozen=True)
class FormatChecks:
    """The four structural checks priced by the format reward, in its order."""

    tags_present: bool
    order_clean: bool
    list_parsed: bool
    list_quality: bool

    def as_tuple(self) -> tuple[bool, bool, bool, bool]:
        return (self.tags_present, self.order_clean, self.list_parsed, self.list_quality)

    @property
    def failed(self) -> tuple[str, ...]:
        return tuple(
            name
            for name, ok in zip(
                ("tags_present", "order_clean", "list_parsed", "list_quality"),
                self.as_tuple(),
            )
            if not ok
        )


@dataclass(frozen=True)
class ParsedDecomposition:
    outcome: Outcome
    claims: tuple[str, ...]
    reasoning: str
    raw: str
    checks: FormatChecks

    @property
    def is_sentinel(self) -> bool:
        return self.outcome in (Outcome.NO_VERIFIABLE_CLAIM, Outcome.CANNOT_BE_DECONTEXTUALIZED)


_THINK = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_OUTPUT = re.compile(r"<output>(.*?)</output>", re.DOTALL)
_CLEAN_FORM = re.compile(r"\s*<think>.*?</think>\s*<output>.*?</output>\s*\Z", re.DOTALL)

_SENTINELS = {
    SENTINEL_NO_CLAIM.casefold(): Outcome.NO_VERIFIABLE_CLAIM,
    SENTINEL_NO_DECONTEXT.casefold(): Outcome.CANNOT_BE_DECONTEXTUALIZED,
}


def _match_sentinel(text: str) -> Outcome | None:
    """Lenient sentinel detection: trim, strip one bracket layer, one quote
    layer, compare case-insensitively."""
    s = text.strip()
    if s.startswith("[") and s.endswith("]"):
        s = s[1:-1].strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        s = s[1:-1].strip()
    return _SENTINELS.get(s.casefold())


def _parse_string_list(body: str) -> list[str] | None:
    """Strict JSON first, then a lenient literal fallback (single quotes,
    trailing commas — nothing requiring code evaluation). Only a list whose
    items are all strings counts."""
    for loader in (json.loads, ast.literal_eval):
        try:
            value = loader(body)
        except Exception:
            continue
        if isinstance(value, list) and all(isinstance(item, str) for item in value):
            return value
    return None


def parse_decomposer_output(text: str) -> ParsedDecomposition:
    """Total parser for decomposer completions.

    Only the first think/output pair is honored; repeated blocks or any
    content outside the two blocks fail the order_clean check. Sentinels get
    parse credit; quality credit additionally requires the bare canonical
    sentinel string.
    """
    think_m = _THINK.search(text)
    output_m = _OUTPUT.search(text)
    reasoning = think_m.group(1).strip() if think_m else ""

    tags_present = think_m is not None and output_m is not None
    order_clean = (
        tags_present
        and len(_THINK.findall(text)) == 1
        and len(_OUTPUT.findall(text)) == 1
        and think_m.start() < output_m.start()
        and _CLEAN_FORM.fullmatch(text) is not None
    )

    if output_m is None:
        checks = FormatChecks(tags_present, order_clean, False, False)
        return ParsedDecomposition(Outcome.PARSE_FAILURE, (), reasoning, text, checks)

    body = output_m.group(1)
    sentinel = _match_sentinel(body)
    if sentinel is not None:
        exact = body.strip() in (SENTINEL_NO_CLAIM, SENTINEL_NO_DECONTEXT)
        checks = FormatChecks(tags_present, order_clean, True, exact)
        return ParsedDecomposition(sentinel, (), reasoning, text, checks)

    items = _parse_string_list(body.strip())
    if items is None:
        checks = FormatChecks(tags_present, order_clean, False, False)
        return ParsedDecomposition(Outcome.PARSE_FAILURE, (), reasoning, text, checks)

    if len(items) == 1:
        one = _match_sentinel(items[0])
        if one is not None:
            # A one-element list holding a sentinel means the sentinel, but
            # is not the exact bare form.
            checks = FormatChecks(tags_present, order_clean, True, False)
            return ParsedDecomposition(one, (), reasoning, text, checks)

    quality = bool(items) and all(item.strip() for item in items)
    if not quality:
        checks = FormatChecks(tags_present, order_clean, True, False)
        return ParsedDecomposition(Outcome.PARSE_FAILURE, (), reasoning, text, checks)

    checks = FormatChecks(tags_present, order_clean, True, True)
    return ParsedDecomposition(Outcome.CLAIMS, tuple(items), reasoning, text, checks)


@dataclass(frozen=True)
class ChecklistJudgment:
    subclaim_index: int
    checks: dict[str, str]  # criterion -> Yes | No | NA
    rationales: dict[str, str] = field(default_factory=dict)


_ANSWERS = {"Yes", "No", "NA"}


def parse_checklist_judgment(text: str, expected: int) -> list[ChecklistJudgment]:
    """Parse the judge's strict-JSON checklist output into exactly `expected`
    judgments. Raises JudgeParseError on malformed JSON, wrong count, or an
    NA on a criterion that does not permit it; the checklist reward prices
    such failures at zero.
    """
    if expected < 1:
        raise ValueError("expected must be >= 1")
    try:
        data = json.loads(text.strip())
    except json.JSONDecodeError as exc:
        raise JudgeParseError(f"not valid JSON: {exc.msg}")
    if not isinstance(data, list):
        raise JudgeParseError("top-level value is not a list")
    if len(data) != expected:
        raise JudgeParseError(f"expected {expected} judgments, got {len(data)}")

    parsed: list[tuple[int | None, dict[str, str], dict[str, str]]] = []
    for pos, item in enumerate(data):
        if not isinstance(item, dict):
            raise JudgeParseError(f"item {pos} is not an object")
        checks = item.get("checks")
        if not isinstance(checks, dict):
            raise JudgeParseError(f"item {pos} missing 'checks' object")
        if set(checks) != set(CHECKLIST_CRITERIA):
            raise JudgeParseError(f"item {pos} criteria mismatch: {sorted(checks)}")
        for criterion, answer in checks.items():
            if answer not in _ANSWERS:
                raise JudgeParseError(f"item {pos} {criterion}: bad answer {answer!r}")
            if answer == "NA" and criterion not in NA_ALLOWED:
                raise JudgeParseError(f"item {pos}: NA not permitted on {criterion}")
        rationales = item.get("rationales")
        rationales = rationales if isinstance(rationales, dict) else {}
        try:
            item_id: int | None = int(item["id"])
        except (KeyError, TypeError, ValueError):
            item_id = None
        parsed.append((item_id, dict(checks), {str(k): str(v) for k, v in rationales.items()}))

    # Match by id when ids form a contiguous 0- or 1-based range, else by order.
    ids = [p[0] for p in parsed]
    order = list(range(expected))
    if all(i is not None for i in ids):
        for base in (0, 1):
            if sorted(ids) == list(range(base, base + expected)):  # type: ignore[arg-type]
                order = [ids.index(base + i) for i in range(expected)]
                break
    return [
        ChecklistJudgment(subclaim_index=i, checks=parsed[src][1], rationales=parsed[src][2])
        for i, src in enumerate(order)
    ]
