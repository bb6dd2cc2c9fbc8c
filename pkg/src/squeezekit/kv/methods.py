"""Named KV-cache compression methods.

Method -> scoring functional mapping: H2O and LOOK-M accumulate attention
over all queries, SnapKV and PyramidKV accumulate over a sliding window,
VL-Cache over the post-vision (text) queries only. StreamingLLM is
rule-based: it keeps the initial sink tokens plus the recent window.
PyramidKV forces the pyramid layer allocation; VL-Cache defaults to the
adaptive allocator (hybrid variants opt in via allocation_mode/alpha).
LOOK-M adds text-prior eviction (visual evicted before text at equal
score) and folds evicted rows into retained ones; its modality-specific
variant restricts that merge to same-modality targets.

Compression runs on the uncompressed prefill cache, never during decode.
Every policy pays a budget-independent prefill surcharge for recomputing
attention scores at selection time (kernel-style attention does not hand
back the matrices it materializes).
"""

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..sim.cache import HeadCache, KVCacheState
from .allocation import AllocationMode, allocate
from .merge import CONCAT_K_DIVISOR, MergeStrategy, apply_plan, build_plan
from .scoring import Functional, score_matrix
from .selection import RetentionMask, select

DEFAULT_SW_WINDOW = 32


class KVMethod(str, enum.Enum):
    STREAMING_LLM = "streaming_llm"
    H2O = "h2o"
    SNAPKV = "snapkv"
    PYRAMIDKV = "pyramidkv"
    LOOKM = "lookm"
    VLCACHE = "vlcache"


_FUNCTIONAL = {
    KVMethod.H2O: Functional.ACC,
    KVMethod.LOOKM: Functional.ACC,
    KVMethod.SNAPKV: Functional.SW,
    KVMethod.PYRAMIDKV: Functional.SW,
    KVMethod.VLCACHE: Functional.PV,
}

_DEFAULT_ALLOCATION = {
    KVMethod.STREAMING_LLM: AllocationMode.UNIFORM,
    KVMethod.H2O: AllocationMode.UNIFORM,
    KVMethod.SNAPKV: AllocationMode.UNIFORM,
    KVMethod.PYRAMIDKV: AllocationMode.PYRAMID,
    KVMethod.LOOKM: AllocationMode.UNIFORM,
    KVMethod.VLCACHE: AllocationMode.ADAPTIVE,
}


@dataclass
class KVPolicySpec:
    """Declarative policy record; round-trips through the harness config."""

    method: str
    budget: float
    allocation_mode: str = None
    alpha: float = None
    head_adaptive: bool = False
    merge_strategy: str = None
    merge_weighting: str = "equal"
    window: int = None
    concat_k: int = None

    def to_dict(self):
        d = {"method": KVMethod(self.method).value, "budget": self.budget}
        if self.allocation_mode is not None:
            d["allocation_mode"] = AllocationMode(self.allocation_mode).value
        if self.alpha is not None:
            d["alpha"] = self.alpha
        if self.head_adaptive:
            d["head_adaptive"] = True
        if self.merge_strategy is not None:
            d["merge_strategy"] = MergeStrategy(self.merge_strategy).value
        if self.merge_weighting != "equal":
            d["merge_weighting"] = self.merge_weighting
        if self.window is not None:
            d["window"] = self.window
        if self.concat_k is not None:
            d["concat_k"] = self.concat_k
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in (
            "method", "budget", "allocation_mode", "alpha", "head_adaptive",
            "merge_strategy", "merge_weighting", "window", "concat_k",
        ) if k in d})


def make_policy(spec: KVPolicySpec):
    """Validate the component combination and build the policy closure."""
    method = KVMethod(spec.method)
    if not 0.0 < spec.budget <= 1.0:
        raise ConfigError(f"budget must be in (0, 1], got {spec.budget}")

    alloc = spec.allocation_mode
    if alloc is None:
        alloc = _DEFAULT_ALLOCATION[method]
    else:
        alloc = AllocationMode(alloc)
    if method is KVMethod.PYRAMIDKV and alloc is not AllocationMode.PYRAMID:
        raise ConfigError(
            "PyramidKV forces its pyramid layer allocation; "
            f"allocation_mode={alloc.value!r} is incompatible"
        )
    if alloc is AllocationMode.HYBRID and spec.alpha is None:
        raise ConfigError("hybrid allocation needs alpha (0.4 and 0.8 are the named settings)")
    if spec.alpha is not None and alloc is not AllocationMode.HYBRID:
        raise ConfigError("alpha only applies to hybrid allocation")
    if spec.window is not None and method not in (KVMethod.SNAPKV, KVMethod.PYRAMIDKV):
        raise ConfigError("window only applies to sliding-window methods (SnapKV, PyramidKV)")

    merge = MergeStrategy(spec.merge_strategy) if spec.merge_strategy is not None else (
        MergeStrategy.MERGE_INTO_RETAINED if method is KVMethod.LOOKM else MergeStrategy.NONE
    )
    return CompressionPolicy(spec, method, alloc, merge)


class CompressionPolicy:
    """Immutable closure mapping (trace, cache, seq) to a compressed cache."""

    prefill_surcharge = True

    def __init__(self, spec, method, allocation_mode, merge_strategy):
        self.spec = spec
        self.method = method
        self.allocation_mode = allocation_mode
        self.merge_strategy = merge_strategy

    def build_allocation(self, trace):
        return allocate(self.allocation_mode, self.spec.budget, trace.num_layers,
                        trace=trace, alpha=self.spec.alpha)

    def retention_mask(self, trace, modality=None):
        """Select retained indices per (layer, head) from a trace."""
        if not trace.is_uniform_length():
            raise ConfigError("KV compression needs a full-length (unpruned) trace")
        l = trace.seq_len
        allocation = self.build_allocation(trace)
        per_layer = []
        priority = None
        if self.method is KVMethod.LOOKM:
            if modality is None:
                raise ConfigError("LOOK-M text-prior eviction needs modality tags")
            priority = (np.asarray(modality) == 0).astype(np.float64)  # visual evicted first
        for li in range(trace.num_layers):
            quota = min(int(allocation.quotas[li]), l)
            w_r = allocation.recent_window(li)
            if self.method is KVMethod.STREAMING_LLM:
                w_r = min(w_r, quota)
                sink_count = quota - w_r
                shared = np.concatenate([
                    np.arange(sink_count, dtype=np.int64),
                    np.arange(l - w_r, l, dtype=np.int64),
                ])
                heads = [shared.copy() for _ in range(trace.num_heads)]
            else:
                mats = trace.matrix(li)
                kind = _FUNCTIONAL[self.method]
                window = self.spec.window
                if kind is Functional.SW:
                    window = min(window or DEFAULT_SW_WINDOW, l)
                scores = np.stack([
                    score_matrix(kind, mats[h], l_v=trace.l_v, window=window)
                    for h in range(trace.num_heads)
                ])
                heads = select(scores, quota, l, w_r, self.spec.head_adaptive,
                               modality_priority=priority)
            per_layer.append(heads)
        return RetentionMask(per_layer, allocation.quotas.copy(), l)

    def compress(self, trace, cache, seq, mask=None):
        """Compressed copy of an uncompressed prefill cache."""
        l = cache.seq_len
        for layer in cache.layers:
            for hc in layer:
                if hc.n_retained != l or hc.n_extra:
                    raise ConfigError("compress expects the uncompressed prefill cache")
        if mask is None:
            mask = self.retention_mask(trace, modality=seq.modality if seq is not None else None)
        new_layers = []
        drop_flags = []
        all_idx = np.arange(l, dtype=np.int64)
        for li, layer in enumerate(cache.layers):
            heads = []
            for h, hc in enumerate(layer):
                retained = mask.layer_head(li, h)
                scores = None
                if self.merge_strategy is not MergeStrategy.NONE:
                    evicted = np.setdiff1d(all_idx, retained)
                    k = self.spec.concat_k
                    if self.merge_strategy is MergeStrategy.CONCAT_CENTROIDS and k is None:
                        k = int(np.floor((self.spec.budget / CONCAT_K_DIVISOR) * l))
                    if self.spec.merge_weighting == "score":
                        scores = score_matrix(
                            _FUNCTIONAL.get(self.method, Functional.ACC),
                            trace.matrix(li)[h], l_v=trace.l_v,
                            window=min(self.spec.window or DEFAULT_SW_WINDOW, l),
                        )
                    plan = build_plan(
                        self.merge_strategy, evicted, retained, hc.keys,
                        modality=seq.modality if seq is not None else None, k=k,
                    )
                    nk, nv, ek, ev = apply_plan(
                        plan, hc.keys, hc.values, retained,
                        weighting=self.spec.merge_weighting, scores=scores,
                    )
                    if plan.dropped:
                        drop_flags.append((li, h, len(plan.dropped)))
                    if ek is not None:
                        nk = np.vstack([nk, ek])
                        nv = np.vstack([nv, ev])
                        heads.append(HeadCache(retained, nk, nv, n_extra=len(ek)))
                    else:
                        heads.append(HeadCache(retained, nk, nv))
                else:
                    heads.append(HeadCache(retained, hc.keys[retained].copy(),
                                           hc.values[retained].copy()))
            new_layers.append(heads)
        out = KVCacheState(new_layers, cache.seed_embedding, l)
        out.merge_drop_flags = drop_flags
        return out
