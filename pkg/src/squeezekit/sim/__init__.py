"""Deterministic toy multimodal transformer and task generators."""

from .cache import HeadCache, KVCacheState
from .config import ModelConfig
from .model import (
    GenerationResult,
    Model,
    PrefillResult,
    build_model,
    causal_attention_ops,
    decode,
    kv_score_recompute_ops,
    prefill,
)
from .sequences import TEXT, VISUAL, TokenSequence
from .tasks import TaskKind, make_task, score_prediction
from .trace import AttentionTrace

__all__ = [
    "AttentionTrace",
    "GenerationResult",
    "HeadCache",
    "KVCacheState",
    "Model",
    "ModelConfig",
    "PrefillResult",
    "TEXT",
    "VISUAL",
    "TaskKind",
    "TokenSequence",
    "build_model",
    "causal_attention_ops",
    "decode",
    "kv_score_recompute_ops",
    "make_task",
    "prefill",
    "score_prediction",
]
