"""Deterministic toy multimodal transformer.

An attention-only residual stack with a tied-embedding readout. Every
projection is gamma*I + scaled N(0,1): the Gaussian part gives each head
and layer its own attention pattern, while the identity skip makes
attention content-addressed (keys match queries that share an embedding
direction) and lets values pass through recognizably. That is what allows
an untrained model to solve the retrieval-style tasks in tasks.py, which
in turn is what makes cache-eviction policies measurable at desk scale.

The last couple of dims of each head are a reserved tag channel: the
embedding table carries no mass there, and task markers live only there.
Markers can therefore steer attention at high amplitude while staying
exactly orthogonal to every vocabulary row, so they never contaminate
the greedy readout.

There is no positional encoding, no normalization and no MLP: compression
policies act on attention structure and on the KV cache, and the causal
mask alone provides the ordering asymmetry they need.

Cost accounting is analytic rather than timed: prefill and decode count
scalar multiply-accumulates of the attention score and mixing products,
so equal runs produce equal counters bit-for-bit.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import SequenceTooLong, ShapeMismatch
from .cache import HeadCache, KVCacheState
from .config import ModelConfig
from .trace import AttentionTrace

IDENTITY_GAIN = 1.0
NOISE_SCALE = 0.25


def _tag_dims_per_head(head_dim):
    if head_dim >= 8:
        return 2
    if head_dim >= 4:
        return 1
    return 0


def tag_channel_mask(config):
    """Bool [hidden]: True on the reserved tag dims (last ones per head)."""
    mask = np.zeros(config.hidden_dim, dtype=bool)
    r = _tag_dims_per_head(config.head_dim)
    if r:
        for h in range(config.num_heads):
            hi = (h + 1) * config.head_dim
            mask[hi - r:hi] = True
    return mask


@dataclass
class LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray

    def named(self, layer_idx):
        return {
            f"layer{layer_idx}.wq": self.wq,
            f"layer{layer_idx}.wk": self.wk,
            f"layer{layer_idx}.wv": self.wv,
            f"layer{layer_idx}.wo": self.wo,
        }


class Model:
    """Immutable after construction; safe to share across readers."""

    def __init__(self, config: ModelConfig, embed, layers):
        self.config = config
        self.embed = embed
        self.layers = layers
        self.tag_mask = tag_channel_mask(config)

    def marker_direction(self, rng):
        """Random unit vector in the tag channel (orthogonal to the vocab)."""
        if not self.tag_mask.any():
            v = rng.standard_normal(self.hidden_dim)
            return v / np.linalg.norm(v)
        v = np.zeros(self.hidden_dim)
        v[self.tag_mask] = rng.standard_normal(int(self.tag_mask.sum()))
        return v / np.linalg.norm(v)

    @property
    def hidden_dim(self):
        return self.config.hidden_dim

    def weight_tensors(self):
        """name -> matrix view of every projection (embedding excluded)."""
        out = {}
        for i, lw in enumerate(self.layers):
            out.update(lw.named(i))
        return out

    def checksum(self):
        h = hashlib.sha256()
        h.update(self.embed.tobytes())
        for lw in self.layers:
            for w in (lw.wq, lw.wk, lw.wv, lw.wo):
                h.update(w.tobytes())
        return h.hexdigest()

    def split_heads(self, x):
        """[l, hidden] -> contiguous [H, l, d]."""
        l = x.shape[0]
        cfg = self.config
        return np.ascontiguousarray(
            x.reshape(l, cfg.num_heads, cfg.head_dim).transpose(1, 0, 2)
        )

    def clone_with_weights(self, named):
        """Copy of the model with some projections replaced (by name)."""
        layers = []
        for i, lw in enumerate(self.layers):
            mats = {}
            for key, cur in lw.named(i).items():
                mats[key.split(".")[1]] = named.get(key, cur)
            layers.append(LayerWeights(**mats))
        return Model(self.config, self.embed, layers)


def build_model(config: ModelConfig) -> Model:
    """Fill weights from a seeded pseudorandom stream.

    Draw order is fixed (embedding, then wq/wk/wv/wo per layer) so equal
    configs are bit-identical. Embedding rows are unit-normalized.
    """
    h = config.hidden_dim
    rng = np.random.default_rng(config.seed)
    embed = rng.standard_normal((config.vocab_size, h))
    embed[:, tag_channel_mask(config)] = 0.0
    embed /= np.linalg.norm(embed, axis=1, keepdims=True)
    eye = IDENTITY_GAIN * np.eye(h)
    sigma = NOISE_SCALE / np.sqrt(h)
    layers = []
    for _ in range(config.num_layers):
        mats = [eye + sigma * rng.standard_normal((h, h)) for _ in range(4)]
        layers.append(LayerWeights(*mats))
    return Model(config, embed, layers)


@dataclass
class PrefillResult:
    trace: AttentionTrace
    cache: KVCacheState
    logits: np.ndarray
    attention_ops: int


@dataclass
class GenerationResult:
    """Greedy decode output plus deterministic cost counters."""

    output_ids: list
    prefill_attention_ops: int = 0
    decode_attention_ops: int = 0
    retained_cache_entries: int = 0

    def total_ops(self):
        return self.prefill_attention_ops + self.decode_attention_ops


def causal_attention_ops(l, num_heads, head_dim):
    """MACs of one layer's causal attention: QK^T scores plus AV mixing."""
    return num_heads * l * (l + 1) * head_dim


def kv_score_recompute_ops(l, num_layers, num_heads, head_dim):
    """Budget-independent surcharge a KV policy pays to rebuild attention
    scores at selection time (one causal QK pass per layer/head)."""
    return num_layers * num_heads * (l * (l + 1) // 2) * head_dim


def prefill(model: Model, seq, reduce_at_layer=None, reducer=None) -> PrefillResult:
    """Full-sequence forward pass with trace and cache capture.

    reducer, when given, is called once before layer `reduce_at_layer`
    with the partial trace and must return the original token positions
    to keep; later layers run on the reduced sequence (in-backbone token
    pruning). Returned logits cover the final layer's surviving rows.
    """
    cfg = model.config
    l = len(seq)
    if l > cfg.max_seq_len:
        raise SequenceTooLong(f"sequence length {l} > max_seq_len {cfg.max_seq_len}")
    scale = 1.0 / np.sqrt(cfg.head_dim)
    x = seq.embeddings.copy()
    token_idx = np.arange(l, dtype=np.int64)
    trace_layers = []
    trace_indices = []
    kv_rows = []
    ops = 0
    for li, lw in enumerate(model.layers):
        if reduce_at_layer is not None and li == reduce_at_layer:
            partial = AttentionTrace(
                trace_layers, trace_indices, seq.l_v, seq.l_t, seq.cls_attention
            )
            kept = np.asarray(reducer(partial), dtype=np.int64)
            rows = np.flatnonzero(np.isin(token_idx, kept))
            x = x[rows]
            token_idx = token_idx[rows]
        q = model.split_heads(x @ lw.wq)
        k = model.split_heads(x @ lw.wk)
        v = model.split_heads(x @ lw.wv)
        a = kernels.causal_attention_probs(q, k, scale)
        attn = np.matmul(a, v)
        li_len = x.shape[0]
        ops += causal_attention_ops(li_len, cfg.num_heads, cfg.head_dim)
        x = x + attn.transpose(1, 0, 2).reshape(li_len, cfg.hidden_dim) @ lw.wo
        trace_layers.append(a)
        trace_indices.append(token_idx.copy())
        kv_rows.append((k, v, token_idx.copy()))
    logits = x @ model.embed.T
    trace = AttentionTrace(
        trace_layers, trace_indices, seq.l_v, seq.l_t, seq.cls_attention
    )
    layers = []
    for (k, v, idx) in kv_rows:
        layers.append([
            HeadCache(idx.copy(), np.ascontiguousarray(k[h]), np.ascontiguousarray(v[h]))
            for h in range(cfg.num_heads)
        ])
    seed_emb = seq.embeddings[-1] if seq.decode_seed is None else seq.decode_seed
    cache = KVCacheState(layers, seed_emb.copy(), l)
    return PrefillResult(trace, cache, logits, ops)


def decode(model: Model, cache: KVCacheState, steps, prefill_ops=0) -> GenerationResult:
    """Greedy decoding against the (possibly compressed) cache.

    The first step re-feeds the sequence's answer cue (by default the
    final prompt token) so the first emitted token already reflects cache
    compression; no further compression is applied while decoding (new
    rows always enter the cache). Counters are analytic:
    2 * rows_visible * head_dim MACs per head per step.
    """
    cfg = model.config
    if cache.num_layers != cfg.num_layers or cache.num_heads != cfg.num_heads:
        raise ShapeMismatch("cache shape does not match model")
    retained = cache.total_rows()
    result = GenerationResult([], prefill_ops, 0, retained)
    if steps <= 0:
        return result
    scale = 1.0 / np.sqrt(cfg.head_dim)
    H, d = cfg.num_heads, cfg.head_dim
    bufs = []
    for layer in cache.layers:
        layer_bufs = []
        for hc in layer:
            n = hc.n_rows
            kb = np.empty((n + steps, d))
            vb = np.empty((n + steps, d))
            kb[:n] = hc.keys
            vb[:n] = hc.values
            layer_bufs.append([kb, vb, n])
        bufs.append(layer_bufs)
    x = cache.seed_embedding.copy()
    ops = 0
    for _ in range(steps):
        for li, lw in enumerate(model.layers):
            q = (x @ lw.wq).reshape(H, d)
            k = (x @ lw.wk).reshape(H, d)
            v = (x @ lw.wv).reshape(H, d)
            keys, values, lengths = [], [], []
            for h in range(H):
                kb, vb, n = bufs[li][h]
                kb[n] = k[h]
                vb[n] = v[h]
                bufs[li][h][2] = n + 1
                keys.append(kb)
                values.append(vb)
                lengths.append(n + 1)
                ops += 2 * (n + 1) * d
            attn = kernels.decode_attention(
                np.ascontiguousarray(q), keys, values, lengths, scale
            )
            x = x + attn.reshape(cfg.hidden_dim) @ lw.wo
        logits = x @ model.embed.T
        next_id = int(np.argmax(logits))
        result.output_ids.append(next_id)
        x = model.embed[next_id].copy()
    result.decode_attention_ops = ops
    return result
