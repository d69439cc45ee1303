from .keyset import KeySet
from .planner import (
    Block,
    BlockPlan,
    TraceReport,
    TraceViolation,
    derive_layer_indices,
    estimate_memory,
    plan_blocks,
    union_model_keys,
    verify_trace,
)

__all__ = [
    "KeySet",
    "Block",
    "BlockPlan",
    "TraceReport",
    "TraceViolation",
    "derive_layer_indices",
    "estimate_memory",
    "plan_blocks",
    "union_model_keys",
    "verify_trace",
]
