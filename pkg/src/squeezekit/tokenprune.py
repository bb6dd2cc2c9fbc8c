"""Visual-token pruning policies.

Three families, applied before or inside the backbone:

* fastv_*: scores each visual token by the attention text queries pay it
  at an early backbone layer (default: prune at layer 2, scoring with the
  layer-1 trace), then keeps the top floor(b * l_v). The A1/A2 variants
  remove or force-retain the encoder-attention sink set first.
* visionzip_prune: keeps the encoder-attention dominant set and recycles
  the discarded tokens as k = floor((b/6.4) * l_v) cluster centroids
  concatenated after the retained block.
* prumerge_prune: IQR outlier rule on encoder attention, uniform-stride
  supplement to fill the quota, then score-weighted feature merging of
  every pruned token into its nearest retained one.

Budget exactness is a hard contract: every outcome retains exactly
max(1, floor(b * l_v)) visual tokens (VisionZip appends its centroids on
top of that). Text tokens are never pruned. All ties break toward the
lower index.
"""

from dataclasses import dataclass, field

import numpy as np

from .cluster import farthest_point_init, kmeans
from .errors import EmptyTextSpan, InvalidConfig, ShapeMismatch
from .sim.model import prefill

FASTV_DEFAULT_LAYER = 2
SINK_FRACTION = 0.10
VISIONZIP_K_DIVISOR = 6.4

A1_EXCLUDE_SINKS = "A1_EXCLUDE_SINKS"
A2_FORCE_SINKS = "A2_FORCE_SINKS"


@dataclass(frozen=True)
class PruneBudget:
    """Retention budget b in (0, 1]; quota floors at one token."""

    fraction: float

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise InvalidConfig(f"budget fraction must be in (0, 1], got {self.fraction}")

    def quota(self, l_v):
        if l_v < 1:
            raise InvalidConfig("no visual tokens to budget")
        return max(1, int(np.floor(self.fraction * l_v)))


@dataclass
class MergedToken:
    """Synthesized embedding with provenance.

    target None means the row is appended after the retained block
    (VisionZip centroid); target j means it replaces retained visual
    index j (PruMerge+ feature merge).
    """

    embedding: np.ndarray
    members: tuple
    target: int = None


@dataclass
class PruneOutcome:
    retained_indices: np.ndarray
    mask: np.ndarray
    scores: np.ndarray
    merged_tokens: list = None
    flags: list = field(default_factory=list)

    @property
    def appended(self):
        if not self.merged_tokens:
            return []
        return [t for t in self.merged_tokens if t.target is None]

    @property
    def replacements(self):
        if not self.merged_tokens:
            return []
        return [t for t in self.merged_tokens if t.target is not None]


def _top_k_indices(scores, k, pool=None):
    """Indices of the k highest scores (lowest index wins ties)."""
    idx = np.arange(len(scores)) if pool is None else np.asarray(pool)
    s = scores[idx]
    order = np.lexsort((idx, -s))
    return np.sort(idx[order[:k]])


def _outcome_from_retained(retained, l_v, scores):
    mask = np.zeros(l_v, dtype=np.uint8)
    mask[retained] = 1
    return PruneOutcome(np.sort(retained), mask, scores)


def fastv_score(trace, layer):
    """Attention accumulated by each visual token over all text-query rows
    of the given layer, averaged over heads."""
    if not 0 <= layer < trace.num_layers:
        raise InvalidConfig(f"layer {layer} outside trace depth {trace.num_layers}")
    if trace.l_t < 1:
        raise EmptyTextSpan("fastv scoring needs at least one text token")
    a = trace.head_mean(layer)
    idx = trace.token_indices[layer]
    text_rows = np.flatnonzero(idx >= trace.l_v)
    vis_cols = np.flatnonzero(idx < trace.l_v)
    scores = np.zeros(trace.l_v)
    scores[idx[vis_cols]] = a[np.ix_(text_rows, vis_cols)].sum(axis=0)
    return scores


def threshold_mask(scores, budget):
    """Binary mask keeping the top floor(b * l_v) scores."""
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise InvalidConfig("scores must be finite")
    l_v = len(scores)
    retained = _top_k_indices(scores, budget.quota(l_v))
    mask = np.zeros(l_v, dtype=np.uint8)
    mask[retained] = 1
    return mask


def sink_set(cls_attention, l_v, sink_fraction=SINK_FRACTION):
    """Top-fraction visual tokens by encoder attention (the visual sinks)."""
    if cls_attention is None:
        raise InvalidConfig("sink variants need encoder cls attention")
    n = max(1, int(np.floor(sink_fraction * l_v)))
    return _top_k_indices(np.asarray(cls_attention), n)


def fastv_outcome(trace, budget, layer=FASTV_DEFAULT_LAYER, variant=None,
                  sink_fraction=SINK_FRACTION, cls_attention=None):
    """Selection core shared by fastv_prune and the generation pipeline.

    Scores come from the last layer computed before pruning (layer - 1).
    """
    scores = fastv_score(trace, layer - 1)
    l_v = trace.l_v
    quota = budget.quota(l_v)
    if variant is None:
        return _outcome_from_retained(_top_k_indices(scores, quota), l_v, scores)

    cls = trace.cls_attention if cls_attention is None else cls_attention
    sinks = sink_set(cls, l_v, sink_fraction)
    non_sinks = np.setdiff1d(np.arange(l_v), sinks)
    if variant == A1_EXCLUDE_SINKS:
        take = min(quota, len(non_sinks))
        retained = _top_k_indices(scores, take, pool=non_sinks)
        flags = []
        if take < quota:  # b so large the candidate pool cannot fill the quota
            refill = _top_k_indices(scores, quota - take, pool=sinks)
            retained = np.sort(np.concatenate([retained, refill]))
            flags.append("a1_sink_refill")
        out = _outcome_from_retained(retained, l_v, scores)
        out.flags.extend(flags)
        return out
    if variant == A2_FORCE_SINKS:
        if quota <= len(sinks):
            retained = _top_k_indices(np.asarray(cls), quota, pool=sinks)
        else:
            rest = _top_k_indices(scores, quota - len(sinks), pool=non_sinks)
            retained = np.sort(np.concatenate([sinks, rest]))
        return _outcome_from_retained(retained, l_v, scores)
    raise InvalidConfig(f"unknown fastv variant {variant!r}")


def fastv_prune(model, seq, budget, layer=FASTV_DEFAULT_LAYER, variant=None,
                sink_fraction=SINK_FRACTION):
    """Run the scoring prefix of the backbone and select visual tokens."""
    if layer < 1 or layer >= model.config.num_layers:
        raise InvalidConfig("fastv prune layer must be inside the backbone")
    partial = prefix_trace(model, seq, layer)
    return fastv_outcome(partial, budget, layer, variant, sink_fraction)


def prefix_trace(model, seq, depth):
    """Trace of the first `depth` layers only (scoring pass)."""
    sub = _PrefixModel(model, depth)
    return prefill(sub, seq).trace


class _PrefixModel:
    """View of a model truncated to its first `depth` layers."""

    def __init__(self, model, depth):
        self._model = model
        self.config = model.config
        self.embed = model.embed
        self.layers = model.layers[:depth]

    def split_heads(self, x):
        return self._model.split_heads(x)


def visionzip_prune(seq, budget, k_divisor=VISIONZIP_K_DIVISOR):
    """Dominant-token selection plus recycled cluster centroids."""
    if seq.cls_attention is None:
        raise InvalidConfig("visionzip needs encoder cls attention")
    l_v = seq.l_v
    scores = np.asarray(seq.cls_attention, dtype=np.float64)
    quota = budget.quota(l_v)
    retained = _top_k_indices(scores, quota)
    out = _outcome_from_retained(retained, l_v, scores)
    discarded = np.setdiff1d(np.arange(l_v), retained)
    k = int(np.floor((budget.fraction / k_divisor) * l_v))
    k = min(k, len(discarded))
    if k >= 1:
        pts = seq.embeddings[discarded]
        init = farthest_point_init(pts, k, priority=scores[discarded])
        centers, assign = kmeans(pts, k, init_indices=init)
        out.merged_tokens = [
            MergedToken(centers[c], tuple(int(j) for j in discarded[assign == c]))
            for c in range(k)
        ]
    return out


def prumerge_prune(seq, budget, trace=None):
    """IQR outlier retention, stride supplement, nearest-token merging."""
    l_v = seq.l_v
    if seq.cls_attention is not None:
        scores = np.asarray(seq.cls_attention, dtype=np.float64)
    elif trace is not None:
        # No encoder attention: fall back to row-wise averages of the
        # first backbone layer's attention over the visual block.
        a = trace.head_mean(0)
        scores = a[:l_v, :l_v].mean(axis=0)
    else:
        raise InvalidConfig("prumerge needs cls attention or a trace fallback")
    quota = budget.quota(l_v)
    q1, q3 = np.percentile(scores, [25, 75])
    tau = q3 + 1.5 * (q3 - q1)
    kept = np.flatnonzero(scores >= tau)
    if len(kept) > quota:
        kept = _top_k_indices(scores, quota, pool=kept)
    elif len(kept) < quota:
        remaining = np.setdiff1d(np.arange(l_v), kept)
        order = remaining[np.lexsort((remaining, -scores[remaining]))]
        need = quota - len(kept)
        stride = len(order) / need
        picks = order[(np.floor(np.arange(need) * stride)).astype(np.int64)]
        kept = np.sort(np.concatenate([kept, picks]))
    out = _outcome_from_retained(kept, l_v, scores)

    pruned = np.setdiff1d(np.arange(l_v), out.retained_indices)
    merged = []
    if len(pruned):
        d2 = ((seq.embeddings[pruned, None, :]
               - seq.embeddings[None, out.retained_indices, :]) ** 2).sum(axis=2)
        nearest = np.argmin(d2, axis=1)
        for ri, r in enumerate(out.retained_indices):
            members = pruned[nearest == ri]
            if not len(members):
                continue  # untouched rows stay bit-identical
            group = np.concatenate([[r], members])
            w = scores[group]
            emb = (w[:, None] * seq.embeddings[group]).sum(axis=0) / w.sum()
            merged.append(MergedToken(emb, tuple(int(j) for j in members), target=int(r)))
    out.merged_tokens = merged or None
    return out


def build_pruned_sequence(seq, outcome):
    """Materialize an encoder-stage outcome as a reduced TokenSequence."""
    retained = outcome.retained_indices
    replacements = {t.target: t.embedding for t in outcome.replacements}
    retained_emb = None
    if replacements:
        retained_emb = seq.embeddings[retained].copy()
        for row, idx in enumerate(retained):
            if int(idx) in replacements:
                retained_emb[row] = replacements[int(idx)]
    appended = [t.embedding for t in outcome.appended]
    extra = np.vstack(appended) if appended else None
    return seq.replace_visual(retained, extra_embeddings=extra,
                              retained_embeddings=retained_emb)
