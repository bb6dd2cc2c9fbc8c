"""Kernel backend benchmark: compiled extension vs NumPy reference.

Times the two hot paths (causal prefill attention and a decode-step
sweep) on representative shapes and reports the speedup. Used by the
`squeezekit bench` subcommand and benchmarks/bench_backends.py.
"""

import time

import numpy as np

from .kernels import backend_module

DEFAULT_SHAPES = [
    # (heads, seq_len, head_dim, decode_rows, decode_steps)
    (4, 128, 16, 128, 32),
    (4, 512, 16, 512, 32),
    (8, 1024, 32, 1024, 64),
]


def _time(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def available_backends():
    names = ["numpy"]
    try:
        backend_module("compiled")
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def run_benchmark(shapes=None, repeats=3, seed=0):
    """Returns rows: one dict per (kernel, shape) with per-backend times."""
    shapes = shapes or DEFAULT_SHAPES
    rng = np.random.default_rng(seed)
    backends = {name: backend_module(name) for name in available_backends()}
    rows = []
    for (h, l, d, rows_n, steps) in shapes:
        q = rng.standard_normal((h, l, d))
        k = rng.standard_normal((h, l, d))
        scale = 1.0 / np.sqrt(d)
        entry = {"kernel": "prefill_attention", "shape": f"H{h} l{l} d{d}"}
        ref = None
        for name, mod in backends.items():
            t = _time(lambda m=mod: m.causal_attention_probs(q, k, scale), repeats)
            entry[name] = t
            ref = backends["numpy"].causal_attention_probs(q, k, scale) if ref is None else ref
            got = mod.causal_attention_probs(q, k, scale)
            entry[f"{name}_maxdiff"] = float(np.max(np.abs(got - ref)))
        rows.append(entry)

        keys = [np.ascontiguousarray(rng.standard_normal((rows_n + steps, d)))
                for _ in range(h)]
        values = [np.ascontiguousarray(rng.standard_normal((rows_n + steps, d)))
                  for _ in range(h)]
        qd = rng.standard_normal((h, d))
        entry = {"kernel": "decode_attention", "shape": f"H{h} n{rows_n} d{d} x{steps}"}
        for name, mod in backends.items():
            def sweep(m=mod):
                for t in range(steps):
                    m.decode_attention(qd, keys, values, [rows_n + t] * h, scale)
            entry[name] = _time(sweep, repeats)
        rows.append(entry)
    return rows


def format_rows(rows):
    lines = []
    for r in rows:
        parts = [f"{r['kernel']:<18} {r['shape']:<20}"]
        for name in ("compiled", "numpy"):
            if name in r:
                parts.append(f"{name}={r[name] * 1e3:8.2f} ms")
        if "compiled" in r and "numpy" in r:
            parts.append(f"speedup={r['numpy'] / r['compiled']:5.2f}x")
        lines.append("  ".join(parts))
    return "\n".join(lines)
