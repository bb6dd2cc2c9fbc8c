"""Token selection under a per-layer quota.

The last ceil(0.10 * quota) positions are force-retained first (the
recent window); the remaining slots go to the top-scoring keys outside
it. Uniform mode builds one index set per layer from head-averaged
scores; head-adaptive mode gives every head its own top set of exactly
the layer quota. Ties always break toward the lower token index, except
when a modality priority is supplied (text retained before visual at
equal score, the text-prior rule).
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class RetentionMask:
    """Per-(layer, head) retained token indices plus budget accounting."""

    per_layer: list          # list over layers of list over heads of index arrays
    quotas: np.ndarray
    seq_len: int

    def layer_head(self, layer, head):
        return self.per_layer[layer][head]

    def dense(self):
        """uint8 [L, H, l] keep/evict tensor."""
        L = len(self.per_layer)
        H = len(self.per_layer[0])
        out = np.zeros((L, H, self.seq_len), dtype=np.uint8)
        for li in range(L):
            for h in range(H):
                out[li, h, self.per_layer[li][h]] = 1
        return out

    def retained_counts(self):
        return [[len(ix) for ix in layer] for layer in self.per_layer]


def _ranked(scores, pool, modality_priority=None):
    """pool indices ranked by score desc; ties prefer text when a priority
    array is given, then the lower index."""
    s = scores[pool]
    if modality_priority is None:
        order = np.lexsort((pool, -s))
    else:
        order = np.lexsort((pool, modality_priority[pool], -s))
    return pool[order]


def select_indices(scores, quota, seq_len, recent_window, modality_priority=None):
    """Sorted retained indices for one (layer, head) score vector."""
    quota = min(int(quota), seq_len)
    w_r = min(int(recent_window), quota)
    recent = np.arange(seq_len - w_r, seq_len, dtype=np.int64)
    slots = quota - w_r
    if slots <= 0:
        return recent
    pool = np.arange(seq_len - w_r, dtype=np.int64)
    picked = _ranked(np.asarray(scores), pool, modality_priority)[:slots]
    return np.sort(np.concatenate([picked, recent]))


def select(scores_per_head, quota, seq_len, recent_window, head_adaptive,
           modality_priority=None):
    """Per-head retained index lists for one layer.

    scores_per_head: [H, l]. Uniform mode shares the head-mean top set;
    head-adaptive gives each head its own. Every head retains exactly
    min(quota, l) indices either way.
    """
    scores_per_head = np.asarray(scores_per_head, dtype=np.float64)
    H = scores_per_head.shape[0]
    if head_adaptive:
        return [
            select_indices(scores_per_head[h], quota, seq_len, recent_window,
                           modality_priority)
            for h in range(H)
        ]
    shared = select_indices(scores_per_head.mean(axis=0), quota, seq_len,
                            recent_window, modality_priority)
    return [shared.copy() for _ in range(H)]
