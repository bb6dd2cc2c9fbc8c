"""Compressed-model container.

Layout: 8-byte magic, u64 little-endian header length, UTF-8 JSON header,
then the raw little-endian array payload. The header records the model
config, method and pattern/spec parameters plus a per-tensor manifest
(kind, shape, and the offset/dtype/shape of every payload array).

Per-tensor payloads:
* dense : the full float64 matrix (uncompressed tensors, embeddings);
* mask  : packbits bitset of the keep mask + float64 kept values;
* quant : nibble- or byte-packed integer codes + per-group float64
          scales/offsets (+ the AWQ per-channel fold when present).

Round-trips are bit-exact: save(load(path)) reproduces the file bytes
and materialized weights equal the originals bitwise.
"""

import io
import json
import struct

import numpy as np

from ..errors import ShapeMismatch, TraceFormatError
from ..sim.config import ModelConfig
from ..sim.model import LayerWeights, Model, tag_channel_mask
from .quantization import QuantSpec, QuantizedTensor

MAGIC = b"SQZW0001"


def _pack_codes(codes, bits):
    if bits <= 4:
        flat = codes.astype(np.uint8).ravel()
        if len(flat) % 2:
            flat = np.concatenate([flat, np.zeros(1, dtype=np.uint8)])
        return (flat[0::2] | (flat[1::2] << 4)).astype(np.uint8)
    if bits <= 8:
        return codes.astype(np.uint8).ravel()
    return codes.astype(np.uint16).ravel()


def _unpack_codes(raw, bits, shape):
    n = int(np.prod(shape))
    if bits <= 4:
        lo = raw & 0x0F
        hi = raw >> 4
        flat = np.empty(len(raw) * 2, dtype=np.uint16)
        flat[0::2] = lo
        flat[1::2] = hi
        return flat[:n].reshape(shape)
    return raw[:n].astype(np.uint16).reshape(shape)


class _PayloadWriter:
    def __init__(self):
        self.buf = io.BytesIO()
        self.arrays = []

    def add(self, key, arr):
        arr = np.ascontiguousarray(arr)
        self.arrays.append({
            "key": key,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": self.buf.tell(),
            "nbytes": arr.nbytes,
        })
        self.buf.write(arr.tobytes())
        return self.arrays[-1]


def _tensor_entry(writer, name, payload):
    if isinstance(payload, QuantizedTensor):
        entry = {
            "name": name, "kind": "quant",
            "shape": list(payload.codes.shape),
            "bits": payload.spec.bits, "group_size": payload.spec.group_size,
            "arrays": [],
        }
        entry["arrays"].append(writer.add(f"{name}.codes",
                                          _pack_codes(payload.codes, payload.spec.bits)))
        entry["arrays"].append(writer.add(f"{name}.scales", payload.scales))
        entry["arrays"].append(writer.add(f"{name}.offsets", payload.offsets))
        if payload.col_scale is not None:
            entry["arrays"].append(writer.add(f"{name}.col_scale", payload.col_scale))
        return entry
    if isinstance(payload, tuple) and len(payload) == 2:  # (mask, dense W)
        mask, w = payload
        if mask.shape != w.shape:
            raise ShapeMismatch("mask and weight shapes differ")
        entry = {"name": name, "kind": "mask", "shape": list(w.shape), "arrays": []}
        entry["arrays"].append(writer.add(f"{name}.bits",
                                          np.packbits(mask.astype(bool).ravel())))
        entry["arrays"].append(writer.add(f"{name}.values",
                                          w[mask.astype(bool)]))
        return entry
    arr = np.asarray(payload, dtype=np.float64)
    entry = {"name": name, "kind": "dense", "shape": list(arr.shape), "arrays": []}
    entry["arrays"].append(writer.add(f"{name}.values", arr))
    return entry


def save_compressed_model(path, config, method, params, tensors):
    """tensors: {name: dense array | (mask, weight) | QuantizedTensor}."""
    writer = _PayloadWriter()
    manifest = [_tensor_entry(writer, name, payload)
                for name, payload in tensors.items()]
    header = {
        "format": MAGIC.decode(),
        "config": config.to_dict(),
        "method": method,
        "params": params,
        "tensors": manifest,
        "payload_size": writer.buf.tell(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(writer.buf.getvalue())


def _read_array(payload, desc):
    off, nb = desc["offset"], desc["nbytes"]
    arr = np.frombuffer(payload[off:off + nb], dtype=np.dtype(desc["dtype"]))
    return arr.reshape(desc["shape"]).copy()


def load_compressed_model(path):
    """Returns (config, method, params, {name: materialized weight})."""
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise TraceFormatError("bad magic in compressed-model file")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        payload = f.read()
    if len(payload) != header["payload_size"]:
        raise TraceFormatError("payload size mismatch")
    tensors = {}
    for entry in header["tensors"]:
        arrays = {d["key"].split(".")[-1]: d for d in entry["arrays"]}
        if entry["kind"] == "dense":
            tensors[entry["name"]] = _read_array(payload, arrays["values"])
        elif entry["kind"] == "mask":
            bits = _read_array(payload, arrays["bits"])
            mask = np.unpackbits(bits)[: int(np.prod(entry["shape"]))]
            mask = mask.reshape(entry["shape"]).astype(bool)
            w = np.zeros(entry["shape"], dtype=np.float64)
            w[mask] = _read_array(payload, arrays["values"])
            tensors[entry["name"]] = w
        elif entry["kind"] == "quant":
            spec = QuantSpec(bits=entry["bits"], group_size=entry["group_size"])
            codes = _unpack_codes(_read_array(payload, arrays["codes"]),
                                  spec.bits, entry["shape"])
            qt = QuantizedTensor(
                spec, codes,
                _read_array(payload, arrays["scales"]),
                _read_array(payload, arrays["offsets"]),
                col_scale=_read_array(payload, arrays["col_scale"])
                if "col_scale" in arrays else None,
            )
            tensors[entry["name"]] = qt.dequantize()
        else:
            raise TraceFormatError(f"unknown tensor kind {entry['kind']!r}")
    config = ModelConfig.from_dict(header["config"])
    return config, header["method"], header["params"], tensors


def materialize_model(config, tensors):
    """Rebuild a Model from materialized tensors (embed + layer mats)."""
    layers = []
    for li in range(config.num_layers):
        layers.append(LayerWeights(
            wq=tensors[f"layer{li}.wq"], wk=tensors[f"layer{li}.wk"],
            wv=tensors[f"layer{li}.wv"], wo=tensors[f"layer{li}.wo"],
        ))
    return Model(config, tensors["embed"], layers)
