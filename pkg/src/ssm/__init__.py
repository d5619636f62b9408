from src.ssm.discretization import decay_factor, discretize
from src.ssm.locality import channel_locality, locality_indicator
from src.ssm.oracles import (
    hidden_state_oracle,
    linearize,
    scan_2d_oracle,
    split_recurrence_oracle,
)
from src.ssm.selective_scan import (
    ScanResult,
    ScanState,
    SelectiveSSM,
    StepParameters,
    run_recurrence,
    selective_scan,
    update_mask,
)

__all__ = [
    "ScanResult",
    "ScanState",
    "SelectiveSSM",
    "StepParameters",
    "channel_locality",
    "decay_factor",
    "discretize",
    "hidden_state_oracle",
    "linearize",
    "locality_indicator",
    "run_recurrence",
    "scan_2d_oracle",
    "selective_scan",
    "split_recurrence_oracle",
    "update_mask",
]
