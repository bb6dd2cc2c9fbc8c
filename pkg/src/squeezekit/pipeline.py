"""End-to-end generation under a compression policy.

Encoder-stage token pruning (VisionZip, PruMerge+) rewrites the sequence
before prefill; FastV prunes inside the backbone via the prefill reducer
hook; KV policies compress the prefill cache before decoding and pay the
budget-independent score-recomputation surcharge. Parameter compression
acts on the model itself and needs no pipeline support beyond swapping
weight matrices.
"""

from dataclasses import dataclass

import numpy as np

from . import tokenprune
from .errors import ConfigError
from .sim.model import decode, kv_score_recompute_ops, prefill


@dataclass
class TokenPolicySpec:
    """Declarative token-pruning record (harness round-trip format)."""

    method: str  # fastv | visionzip | prumerge
    budget: float
    layer: int = tokenprune.FASTV_DEFAULT_LAYER
    variant: str = None
    sink_fraction: float = tokenprune.SINK_FRACTION
    k_divisor: float = tokenprune.VISIONZIP_K_DIVISOR

    def to_dict(self):
        d = {"method": self.method, "budget": self.budget}
        if self.method == "fastv":
            d["layer"] = self.layer
            if self.variant is not None:
                d["variant"] = self.variant
            if self.sink_fraction != tokenprune.SINK_FRACTION:
                d["sink_fraction"] = self.sink_fraction
        if self.method == "visionzip" and self.k_divisor != tokenprune.VISIONZIP_K_DIVISOR:
            d["k_divisor"] = self.k_divisor
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in (
            "method", "budget", "layer", "variant", "sink_fraction", "k_divisor"
        ) if k in d})


def make_token_policy(spec: TokenPolicySpec):
    if spec.method not in ("fastv", "visionzip", "prumerge"):
        raise ConfigError(f"unknown token-prune method {spec.method!r}")
    if spec.method != "fastv" and spec.variant is not None:
        raise ConfigError("sink variants only apply to fastv")
    tokenprune.PruneBudget(spec.budget)  # validate the fraction eagerly
    return spec


@dataclass
class GenerationOutput:
    result: object                # GenerationResult
    prune_outcome: object = None  # PruneOutcome when a token policy ran
    retained_mask: object = None  # RetentionMask when a KV policy ran
    cache: object = None


def generate(model, seq, steps, token_policy=None, kv_policy=None):
    """Run prefill + greedy decode under the given policies."""
    budget = tokenprune.PruneBudget(token_policy.budget) if token_policy else None
    outcome = None
    mask = None

    if token_policy and token_policy.method in ("visionzip", "prumerge"):
        if token_policy.method == "visionzip":
            outcome = tokenprune.visionzip_prune(seq, budget, token_policy.k_divisor)
        else:
            outcome = tokenprune.prumerge_prune(seq, budget)
        seq = tokenprune.build_pruned_sequence(seq, outcome)
        pr = prefill(model, seq)
    elif token_policy and token_policy.method == "fastv":
        captured = {}

        def reducer(partial):
            out = tokenprune.fastv_outcome(
                partial, budget, token_policy.layer, token_policy.variant,
                token_policy.sink_fraction,
            )
            captured["outcome"] = out
            text_positions = np.arange(seq.l_v, len(seq), dtype=np.int64)
            return np.concatenate([out.retained_indices, text_positions])

        pr = prefill(model, seq, reduce_at_layer=token_policy.layer, reducer=reducer)
        outcome = captured["outcome"]
    else:
        pr = prefill(model, seq)

    cache = pr.cache
    prefill_ops = pr.attention_ops
    if kv_policy is not None:
        cfg = model.config
        prefill_ops += kv_score_recompute_ops(
            cache.seq_len, cfg.num_layers, cfg.num_heads, cfg.head_dim
        )
        mask = kv_policy.retention_mask(pr.trace, modality=seq.modality)
        cache = kv_policy.compress(pr.trace, cache, seq, mask=mask)

    result = decode(model, cache, steps, prefill_ops=prefill_ops)
    return GenerationOutput(result, outcome, mask, cache)
