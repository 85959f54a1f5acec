"""Writers (and verification readers) for the simulator's file formats.

The simulator consumes MXW1 weight files and MXI1 sample files; this
module implements the same little-endian layouts independently so the
harness never imports the simulator package.

MXW1: magic `MXW1`, version u16 = 1, layer_count u16; per layer:
name_len u8 + ASCII name, rank u8, dims u32 each, f32 row-major weights,
bias_len u32, f32 biases.  Conv weights are (out_channels, in_channels,
kernel); FC weights are (in_features, out_features).

MXI1: magic `MXI1`, version u16 = 1, sample_count u32, length u32,
label flag u8, f32 samples row-major, then u8 labels when labeled.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

WEIGHT_MAGIC = b"MXW1"
INPUT_MAGIC = b"MXI1"
VERSION = 1

# Canonical layer order expected by the simulator's loader.
LAYER_ORDER = ["conv1", "conv2", "fc1", "fc2"]


def write_weights(path, params: dict[str, tuple[np.ndarray, np.ndarray]],
                  order=None) -> None:
    names = list(order) if order is not None else list(params)
    chunks = [WEIGHT_MAGIC, struct.pack("<HH", VERSION, len(names))]
    for name in names:
        w, b = params[name]
        w = np.ascontiguousarray(w, dtype=np.float32)
        b = np.ascontiguousarray(b, dtype=np.float32)
        encoded = name.encode("ascii")
        chunks += [struct.pack("<B", len(encoded)), encoded,
                   struct.pack("<B", w.ndim),
                   struct.pack(f"<{w.ndim}I", *w.shape),
                   w.tobytes(),
                   struct.pack("<I", b.size), b.tobytes()]
    Path(path).write_bytes(b"".join(chunks))


def read_weights(path):
    data = Path(path).read_bytes()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise ValueError(f"{path}: truncated")
        out = data[off:off + n]
        off += n
        return out

    if take(4) != WEIGHT_MAGIC:
        raise ValueError(f"{path}: not an MXW1 file")
    version, n_layers = struct.unpack("<HH", take(4))
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    params = {}
    order = []
    for _ in range(n_layers):
        (name_len,) = struct.unpack("<B", take(1))
        name = take(name_len).decode("ascii")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims))
        w = np.frombuffer(take(4 * count), dtype="<f4").reshape(dims)
        (bias_len,) = struct.unpack("<I", take(4))
        b = np.frombuffer(take(4 * bias_len), dtype="<f4")
        params[name] = (w.copy(), b.copy())
        order.append(name)
    return params, order


def write_inputs(path, samples: np.ndarray, labels=None) -> None:
    samples = np.ascontiguousarray(np.atleast_2d(samples), dtype=np.float32)
    n, length = samples.shape
    chunks = [INPUT_MAGIC,
              struct.pack("<HIIB", VERSION, n, length, int(labels is not None)),
              samples.tobytes()]
    if labels is not None:
        labels = np.ascontiguousarray(labels, dtype=np.uint8)
        if labels.shape != (n,):
            raise ValueError(f"labels shape {labels.shape} != ({n},)")
        chunks.append(labels.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_inputs(path):
    data = Path(path).read_bytes()
    if data[:4] != INPUT_MAGIC:
        raise ValueError(f"{path}: not an MXI1 file")
    version, n, length, labeled = struct.unpack("<HIIB", data[4:15])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    body = data[15:]
    samples = np.frombuffer(body[:4 * n * length], dtype="<f4").reshape(n, length)
    labels = None
    if labeled:
        labels = np.frombuffer(body[4 * n * length:4 * n * length + n],
                               dtype=np.uint8).astype(np.int64)
    return samples.astype(np.float64), labels
