"""Remote reward-function adapter for GRPO trainers."""

__version__ = "0.1.0"

from .adapter import (
    AdapterConfig,
    AdapterError,
    ConfigMismatch,
    GroupScore,
    RewardLogger,
    ServiceRewardClient,
    make_reward_fn,
)

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "ConfigMismatch",
    "GroupScore",
    "RewardLogger",
    "ServiceRewardClient",
    "make_reward_fn",
]
