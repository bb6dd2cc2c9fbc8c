"""KV cache state: retained key/value rows per (layer, head)."""

import numpy as np

from ..errors import ShapeMismatch


class HeadCache:
    """Retained K/V rows of one attention head.

    indices: strictly increasing original token positions of the retained
    rows. keys/values: float64 [n, d] aligned with indices, optionally
    followed by synthetic rows (merge centroids) counted in n_extra and
    carrying no token index.
    """

    __slots__ = ("indices", "keys", "values", "n_extra")

    def __init__(self, indices, keys, values, n_extra=0):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.keys = keys
        self.values = values
        self.n_extra = int(n_extra)
        if keys.shape != values.shape:
            raise ShapeMismatch("keys/values shape mismatch")
        if keys.shape[0] != len(self.indices) + self.n_extra:
            raise ShapeMismatch("row count != retained + synthetic rows")
        if len(self.indices) > 1 and np.any(np.diff(self.indices) <= 0):
            raise ShapeMismatch("retained indices must be strictly increasing")

    @property
    def n_retained(self):
        return len(self.indices)

    @property
    def n_rows(self):
        return self.keys.shape[0]


class KVCacheState:
    """Full cache of one generation in flight (exclusively owned).

    layers[i] is a list of HeadCache, one per head. seed_embedding is the
    final prompt token's embedding row, consumed by the first decode step.
    merge_drop_flags records evicted rows that a modality-specific merge
    had to drop for want of a same-modality target.
    """

    def __init__(self, layers, seed_embedding, seq_len):
        self.layers = layers
        self.seed_embedding = seed_embedding
        self.seq_len = int(seq_len)
        self.merge_drop_flags = []

    @property
    def num_layers(self):
        return len(self.layers)

    @property
    def num_heads(self):
        return len(self.layers[0])

    def head(self, layer, h):
        return self.layers[layer][h]

    def retained_per_layer(self):
        """Per-layer retained row counts per head (synthetic rows excluded)."""
        return [[hc.n_retained for hc in layer] for layer in self.layers]

    def total_rows(self):
        return sum(hc.n_rows for layer in self.layers for hc in layer)

    def total_retained(self):
        return sum(hc.n_retained for layer in self.layers for hc in layer)


def full_cache_from_rows(kv_rows, seed_embedding, seq_len):
    """Uncompressed cache: every (layer, head) keeps all rows.

    kv_rows: list over layers of (K, V) with K, V float64 [H, l_layer, d];
    token index maps are taken as given per layer.
    """
    layers = []
    for (k, v, idx) in kv_rows:
        heads = []
        for h in range(k.shape[0]):
            heads.append(HeadCache(idx.copy(), k[h].copy(), v[h].copy()))
        layers.append(heads)
    return KVCacheState(layers, seed_embedding, seq_len)
