"""NumPy reference implementation of the attention kernels.

This backend defines the kernel contract; the compiled backend in
``_fast.pyx`` implements the same three entry points. Numerical results
agree to ~1e-12 but are not bitwise identical across backends (different
summation orders), so anything that needs bit-level determinism must stay
on one backend for the comparison.
"""

import numpy as np

BACKEND_NAME = "numpy"


def causal_attention_probs(q, k, scale):
    """Row-stochastic causal attention probabilities for one layer.

    q, k: [H, l, d] float64. Returns A [H, l, l] with A[h, i, j] = 0 for
    j > i and each row summing to 1 over the visible prefix.
    """
    scores = np.matmul(q, np.swapaxes(k, 1, 2)) * scale
    l = scores.shape[1]
    mask = np.triu(np.ones((l, l), dtype=bool), k=1)
    scores[:, mask] = -np.inf
    scores -= scores.max(axis=2, keepdims=True)
    np.exp(scores, out=scores)
    scores[:, mask] = 0.0
    scores /= scores.sum(axis=2, keepdims=True)
    return scores


def decode_attention(q, keys, values, lengths, scale):
    """One decode step of multi-head attention over ragged per-head caches.

    q: [H, d]; keys, values: lists of H arrays [n_h_max, d] of which the
    first lengths[h] rows are valid. Returns out [H, d].
    """
    H, d = q.shape
    out = np.empty((H, d))
    for h in range(H):
        n = lengths[h]
        s = keys[h][:n] @ q[h] * scale
        s -= s.max()
        np.exp(s, out=s)
        s /= s.sum()
        out[h] = s @ values[h][:n]
    return out


def weighted_average_rows(rows, weights):
    """Weighted average of rows [n, d] with weights [n] (sum > 0)."""
    w = np.asarray(weights, dtype=np.float64)
    return (w[:, None] * rows).sum(axis=0) / w.sum()
