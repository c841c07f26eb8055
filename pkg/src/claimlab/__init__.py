"""claimlab: decompose-then-verify factuality engine with a multi-objective
reward service for RL trainers."""

__version__ = "0.1.0"

from .corpus import (
    DecompositionInput,
    Granularity,
    Label,
    LabeledUnit,
    build_window,
    load_dataset,
    segment_response,
)
from .prompting import (
    ChecklistJudgment,
    FormatChecks,
    Outcome,
    ParsedDecomposition,
    parse_checklist_judgment,
    parse_decomposer_output,
    render_checklist_prompt,
    render_decomposition_prompt,
)
from .rewards import (
    RewardBreakdown,
    RewardConfig,
    RolloutGroup,
    checklist_reward,
    dense_verifier_reward,
    format_reward,
    group_advantages,
    sparse_verifier_reward,
    total_reward,
)
from .verify import aggregate_response, aggregate_sentence, harmonic_mean

__all__ = [
    "ChecklistJudgment",
    "DecompositionInput",
    "FormatChecks",
    "Granularity",
    "Label",
    "LabeledUnit",
    "Outcome",
    "ParsedDecomposition",
    "RewardBreakdown",
    "RewardConfig",
    "RolloutGroup",
    "aggregate_response",
    "aggregate_sentence",
    "build_window",
    "checklist_reward",
    "dense_verifier_reward",
    "format_reward",
    "group_advantages",
    "harmonic_mean",
    "load_dataset",
    "parse_checklist_judgment",
    "parse_decomposer_output",
    "render_checklist_prompt",
    "render_decomposition_prompt",
    "segment_response",
    "sparse_verifier_reward",
    "total_reward",
]
