"""Per-layer, per-head attention traces captured during prefill."""

import numpy as np

from ..errors import ShapeMismatch


class AttentionTrace:
    """Attention matrices for every (layer, head) of one prefill.

    layers[i] is float64 [H, l_i, l_i], row-stochastic over the causal
    prefix with exact zeros above the diagonal. token_indices[i] maps the
    layer's rows back to original sequence positions (token pruning
    shrinks l_i for later layers; KV-compression traces keep l_i = l).
    """

    def __init__(self, layers, token_indices, l_v, l_t, cls_attention=None):
        if len(layers) != len(token_indices):
            raise ShapeMismatch("one token index map per traced layer required")
        self.layers = layers
        self.token_indices = [np.asarray(ix, dtype=np.int64) for ix in token_indices]
        self.l_v = int(l_v)
        self.l_t = int(l_t)
        self.cls_attention = cls_attention

    @property
    def num_layers(self):
        return len(self.layers)

    @property
    def num_heads(self):
        return self.layers[0].shape[0]

    @property
    def seq_len(self):
        return self.l_v + self.l_t

    def matrix(self, layer):
        """[H, l_i, l_i] attention of one layer."""
        return self.layers[layer]

    def head_mean(self, layer):
        """[l_i, l_i] head-averaged attention of one layer."""
        return self.layers[layer].mean(axis=0)

    def is_uniform_length(self):
        l = self.layers[0].shape[1]
        return all(m.shape[1] == l for m in self.layers)

    def validate(self, atol=1e-6):
        """Check row-stochasticity and causal zeros on every layer."""
        for m in self.layers:
            h, li, lj = m.shape
            if li != lj:
                raise ShapeMismatch("attention matrices must be square")
            upper = np.triu_indices(li, k=1)
            if np.any(m[:, upper[0], upper[1]] != 0.0):
                raise ShapeMismatch("nonzero entries above the causal diagonal")
            rows = m.sum(axis=2)
            if not np.allclose(rows, 1.0, atol=atol):
                raise ShapeMismatch("attention rows must sum to 1")
        return True
