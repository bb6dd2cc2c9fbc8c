"""KV-cache compression: scoring functionals, allocators, selection,
merge strategies and the six named methods."""

from .allocation import AllocationMode, BudgetAllocation, allocate, layer_density_stat
from .merge import MergePlan, MergeStrategy, apply_plan, build_plan
from .methods import KVMethod, KVPolicySpec, make_policy
from .scoring import Functional, score_matrix
from .selection import RetentionMask, select, select_indices

__all__ = [
    "AllocationMode",
    "BudgetAllocation",
    "Functional",
    "KVMethod",
    "KVPolicySpec",
    "MergePlan",
    "MergeStrategy",
    "RetentionMask",
    "allocate",
    "apply_plan",
    "build_plan",
    "layer_density_stat",
    "make_policy",
    "score_matrix",
    "select",
    "select_indices",
]
