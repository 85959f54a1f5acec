"""Binary weight (MXW1) and input-sample (MXI1) file formats.

MXW1 layout, little-endian, no padding between fields:

    magic   4 bytes  b"MXW1"
    version u16      1
    layers  u16
    per layer:
        name_len u8, name (ASCII, e.g. conv1/conv2/fc1/fc2)
        rank u8, dims u32 * rank
        weights f32 * prod(dims), row-major
        bias_len u32, bias f32 * bias_len

Conv weights are stored as (out_channels, in_channels, kernel); FC weights
as (in_features, out_features).  The FC1 input ordering follows the
reference forward pass: first branch (kernel = alpha) channels first, each
channel's time samples contiguous.

MXI1 layout, little-endian:

    magic   4 bytes  b"MXI1"
    version u16      1
    samples u32, length u32, labeled u8
    samples f32 * samples * length (row-major), then u8 labels if labeled
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .network import NetworkParams

__all__ = [
    "FormatError",
    "write_weights",
    "read_weights",
    "write_inputs",
    "read_inputs",
]

_WEIGHT_MAGIC = b"MXW1"
_INPUT_MAGIC = b"MXI1"
_VERSION = 1


class FormatError(ValueError):
    """Malformed or truncated weight/input file."""


def write_weights(path, params: NetworkParams, order: list[str] | None = None) -> None:
    """Serialize parameters to MXW1; layer order defaults to dict order."""
    names = list(order) if order is not None else list(params.keys())
    chunks = [_WEIGHT_MAGIC, struct.pack("<HH", _VERSION, len(names))]
    for name in names:
        w, b = params[name]
        w = np.ascontiguousarray(w, dtype=np.float32)
        b = np.ascontiguousarray(b, dtype=np.float32)
        encoded = name.encode("ascii")
        if not 1 <= len(encoded) <= 255:
            raise FormatError(f"layer name {name!r} not encodable")
        chunks.append(struct.pack("<B", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", w.ndim))
        chunks.append(struct.pack(f"<{w.ndim}I", *w.shape))
        chunks.append(w.tobytes())
        chunks.append(struct.pack("<I", b.size))
        chunks.append(b.tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes, label: str):
        self.data = data
        self.offset = 0
        self.label = label

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(f"{self.label}: truncated file")
        out = self.data[self.offset:self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))


def read_weights(path) -> tuple[NetworkParams, list[str]]:
    """Parse an MXW1 file; returns (params, layer order)."""
    r = _Reader(Path(path).read_bytes(), str(path))
    if r.take(4) != _WEIGHT_MAGIC:
        raise FormatError(f"{path}: bad magic, not an MXW1 file")
    version, n_layers = r.unpack("HH")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported MXW1 version {version}")
    params: NetworkParams = {}
    order: list[str] = []
    for _ in range(n_layers):
        (name_len,) = r.unpack("B")
        try:
            name = r.take(name_len).decode("ascii")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: non-ASCII layer name") from exc
        (rank,) = r.unpack("B")
        if rank < 1 or rank > 4:
            raise FormatError(f"{path}: layer {name}: implausible rank {rank}")
        dims = r.unpack(f"{rank}I")
        count = int(np.prod(dims))
        if count <= 0 or count > 1 << 28:
            raise FormatError(f"{path}: layer {name}: implausible dims {dims}")
        w = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims)
        (bias_len,) = r.unpack("I")
        b = np.frombuffer(r.take(4 * bias_len), dtype="<f4")
        if name in params:
            raise FormatError(f"{path}: duplicate layer {name}")
        params[name] = (w.astype(np.float64), b.astype(np.float64))
        order.append(name)
    return params, order


def write_inputs(path, samples: np.ndarray, labels: np.ndarray | None = None) -> None:
    """Serialize a (n, length) sample matrix and optional u8 labels to MXI1."""
    samples = np.ascontiguousarray(np.atleast_2d(samples), dtype=np.float32)
    n, length = samples.shape
    labeled = labels is not None
    chunks = [
        _INPUT_MAGIC,
        struct.pack("<HIIB", _VERSION, n, length, int(labeled)),
        samples.tobytes(),
    ]
    if labeled:
        labels = np.ascontiguousarray(labels, dtype=np.uint8)
        if labels.shape != (n,):
            raise FormatError(f"labels shape {labels.shape} != ({n},)")
        chunks.append(labels.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_inputs(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Parse an MXI1 file; returns (samples, labels or None)."""
    r = _Reader(Path(path).read_bytes(), str(path))
    if r.take(4) != _INPUT_MAGIC:
        raise FormatError(f"{path}: bad magic, not an MXI1 file")
    version, n, length, labeled = r.unpack("HIIB")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported MXI1 version {version}")
    if labeled not in (0, 1):
        raise FormatError(f"{path}: bad label flag {labeled}")
    samples = np.frombuffer(r.take(4 * n * length), dtype="<f4")
    samples = samples.reshape(n, length).astype(np.float64)
    labels = None
    if labeled:
        labels = np.frombuffer(r.take(n), dtype=np.uint8).astype(np.int64)
    if r.offset != len(r.data):
        raise FormatError(f"{path}: {len(r.data) - r.offset} trailing bytes")
    return samples, labels
