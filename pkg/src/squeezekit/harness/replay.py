"""Trace export and model-free policy replay.

Replay applies a KV policy to a stored attention trace, without the
model, and emits the per-layer budget distribution (quota vs the uniform
average) plus the retained-token index lists.
"""

import numpy as np

from ..kv.methods import KVPolicySpec, make_policy
from ..sim.model import prefill
from ..sim.tasks import make_task
from ..sim.trace_io import export_trace, import_trace


def export_traces(model, seq, path):
    """Prefill and write the attention trace to `path`."""
    pr = prefill(model, seq)
    export_trace(pr.trace, path)
    return pr.trace


def export_task_trace(model, kind, params, seed, path):
    seq, _ = make_task(kind, params, seed, model)
    return export_traces(model, seq, path)


def replay(path, policy_spec):
    """Apply a KV policy to a stored trace.

    Returns (RetentionMask, rows) where rows carry one dict per layer:
    quota, the uniform per-layer average, and their ratio (the budget
    distribution shape).
    """
    trace = import_trace(path)
    if isinstance(policy_spec, dict):
        policy_spec = KVPolicySpec.from_dict(policy_spec)
    policy = make_policy(policy_spec)
    modality = (np.arange(trace.seq_len) >= trace.l_v).astype(np.uint8)
    mask = policy.retention_mask(trace, modality=modality)
    allocation = policy.build_allocation(trace)
    uniform_avg = allocation.total / trace.num_layers
    rows = [
        {
            "layer": li,
            "quota": int(allocation.quotas[li]),
            "uniform_avg": uniform_avg,
            "ratio": float(allocation.quotas[li] / uniform_avg),
            "retained": [int(i) for i in mask.layer_head(li, 0)],
        }
        for li in range(trace.num_layers)
    ]
    return mask, rows
