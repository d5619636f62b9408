from src.selection.token_selection import (
    InstanceLearner,
    TokenMask,
    build_mask,
    instance_logits,
    percentile_threshold,
    selection_count,
    token_entropy,
    top_local_channels,
)

__all__ = [
    "InstanceLearner",
    "TokenMask",
    "build_mask",
    "instance_logits",
    "percentile_threshold",
    "selection_count",
    "token_entropy",
    "top_local_channels",
]
