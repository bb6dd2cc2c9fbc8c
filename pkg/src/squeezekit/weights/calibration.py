"""Calibration capture: input activations of every projection.

A recording forward pass over seeded task sequences collects, per weight
matrix, the activation rows feeding it (the attention input for wq/wk/wv,
the concatenated head outputs for wo). Scoring conventions downstream
expect X as [n_features, n_samples].
"""

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ShapeMismatch
from ..sim.tasks import TaskKind, make_task

DEFAULT_SAMPLE_COUNT = 128


@dataclass
class CalibrationSet:
    """Activation samples for one projection, X [n_features, n_samples]."""

    x: np.ndarray
    tensor_name: str = ""

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[1] < 1:
            raise ShapeMismatch("calibration needs at least one sample column")
        if not np.all(np.isfinite(np.linalg.norm(self.x, axis=1))):
            raise ShapeMismatch("calibration feature norms must be finite")

    @property
    def n_features(self):
        return self.x.shape[0]

    def feature_norms(self):
        return np.linalg.norm(self.x, axis=1)


def calibration_tasks(model, count=DEFAULT_SAMPLE_COUNT, seed=0,
                      params=None, kind=TaskKind.NEEDLE_RETRIEVAL):
    """Seeded task sequences standing in for a held-out calibration set."""
    params = params or {"l_v": 56, "l_t": 8}
    return [make_task(kind, params, seed=seed + i, model=model)[0]
            for i in range(count)]


def capture_calibration(model, seqs, max_rows_per_tensor=2048):
    """Run prefill over seqs recording every projection input.

    Returns {tensor_name: CalibrationSet}. Rows are token activations
    stacked across sequences, evenly subsampled to the cap so the capture
    stays deterministic.
    """
    cfg = model.config
    scale = 1.0 / np.sqrt(cfg.head_dim)
    rows = {name: [] for name in model.weight_tensors()}
    for seq in seqs:
        x = seq.embeddings.copy()
        l = x.shape[0]
        for li, lw in enumerate(model.layers):
            rows[f"layer{li}.wq"].append(x.copy())
            rows[f"layer{li}.wk"].append(x.copy())
            rows[f"layer{li}.wv"].append(x.copy())
            q = model.split_heads(x @ lw.wq)
            k = model.split_heads(x @ lw.wk)
            v = model.split_heads(x @ lw.wv)
            a = kernels.causal_attention_probs(q, k, scale)
            attn = np.matmul(a, v).transpose(1, 0, 2).reshape(l, cfg.hidden_dim)
            rows[f"layer{li}.wo"].append(attn.copy())
            x = x + attn @ lw.wo
    out = {}
    for name, chunks in rows.items():
        stacked = np.vstack(chunks)
        if len(stacked) > max_rows_per_tensor:
            stride = len(stacked) / max_rows_per_tensor
            pick = (np.floor(np.arange(max_rows_per_tensor) * stride)).astype(np.int64)
            stacked = stacked[pick]
        out[name] = CalibrationSet(stacked.T.copy(), tensor_name=name)
    return out
