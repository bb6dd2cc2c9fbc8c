"""Attention-trace files: binary/JSON hybrid for external replay.

Layout: 8-byte magic, u64 little-endian header length, UTF-8 JSON header
(dims and modality spans), then the body: per layer, per head, the l x l
attention matrix as row-major float32, followed by the encoder cls
vector (float32 [l_v]) when present.

Matrices are stored at float32; import returns float64 upcasts, so
export(import(path)) reproduces the file bytes exactly and
import(export(trace)) equals the float32 rounding of the trace.
"""

import json
import struct

import numpy as np

from ..errors import TraceFormatError
from .trace import AttentionTrace

MAGIC = b"SQZTRC01"


def export_trace(trace, path):
    if not trace.is_uniform_length():
        raise TraceFormatError("only full-length (unpruned) traces are exportable")
    l = trace.layers[0].shape[1]
    if l != trace.seq_len:
        raise TraceFormatError("trace length does not match its spans")
    header = {
        "num_layers": trace.num_layers,
        "num_heads": trace.num_heads,
        "seq_len": l,
        "l_v": trace.l_v,
        "l_t": trace.l_t,
        "has_cls": trace.cls_attention is not None,
        "dtype": "<f4",
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for li in range(trace.num_layers):
            f.write(np.ascontiguousarray(trace.layers[li], dtype="<f4").tobytes())
        if trace.cls_attention is not None:
            f.write(np.asarray(trace.cls_attention, dtype="<f4").tobytes())


def import_trace(path):
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise TraceFormatError("bad magic in trace file")
        raw = f.read(8)
        if len(raw) != 8:
            raise TraceFormatError("truncated trace header length")
        (hlen,) = struct.unpack("<Q", raw)
        try:
            header = json.loads(f.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise TraceFormatError(f"malformed trace header: {e}") from None
        body = f.read()
    L, H = header["num_layers"], header["num_heads"]
    l, l_v, l_t = header["seq_len"], header["l_v"], header["l_t"]
    if l != l_v + l_t:
        raise TraceFormatError("header spans do not add up to seq_len")
    per_layer = H * l * l * 4
    expected = L * per_layer + (l_v * 4 if header["has_cls"] else 0)
    if len(body) != expected:
        raise TraceFormatError(
            f"trace body has {len(body)} bytes, header implies {expected}"
        )
    layers = []
    for li in range(L):
        chunk = body[li * per_layer:(li + 1) * per_layer]
        layers.append(
            np.frombuffer(chunk, dtype="<f4").reshape(H, l, l).astype(np.float64)
        )
    cls = None
    if header["has_cls"]:
        cls = np.frombuffer(body[L * per_layer:], dtype="<f4").astype(np.float64)
    idx = [np.arange(l, dtype=np.int64) for _ in range(L)]
    return AttentionTrace(layers, idx, l_v, l_t, cls_attention=cls)
