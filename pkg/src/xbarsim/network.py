"""Parallel 1D-CNN architecture family: specs, reference forward pass, quantizers.

The network family is a single-input, two-branch convolutional front end
(kernel sizes alpha and m - 2 - alpha on a length-m input), one average
pooling layer, and a small fully-connected head ending in 2 logits.  The
canonical instance (m = n = 64, L = 1, D = 2, alpha = [32], beta = [8])
has kernels 32/30, an 8-wide hidden FC layer, and 10,778 parameters.

All operations here are pure functions on immutable values; the forward
pass is the 64-bit floating-point reference against which the crossbar
execution engine is checked.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LayerKind",
    "LayerSpec",
    "ConvBlockSpec",
    "NetworkSpec",
    "NetworkParams",
    "Signal",
    "build_network_architecture",
    "canonical_network",
    "count_parameters",
    "conv1d",
    "avgpool1d",
    "relu",
    "fully_connected",
    "conv_output_length",
    "pool_output_length",
    "LayerShape",
    "trace_shapes",
    "forward",
    "forward_trace",
    "random_params",
    "quantize_fixed",
    "quantize_params",
]


class LayerKind(enum.Enum):
    CONV1D = "conv1d"
    AVGPOOL1D = "avgpool1d"
    RELU = "relu"
    FULLY_CONNECTED = "fully_connected"
    CONCAT = "concat"


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the network; unused fields stay at their defaults."""

    kind: LayerKind
    name: str = ""
    in_channels: int = 1
    out_channels: int = 1
    kernel_size: int = 1
    stride: int = 1
    padding_left: int = 0
    padding_right: int = 0
    in_features: int = 0
    out_features: int = 0

    def __post_init__(self):
        if self.kernel_size < 1 or self.stride < 1:
            raise ValueError(f"{self.name}: kernel_size and stride must be >= 1")
        if self.padding_left < 0 or self.padding_right < 0:
            raise ValueError(f"{self.name}: paddings must be >= 0")
        if self.kind is LayerKind.CONV1D and self.out_channels < 1:
            raise ValueError(f"{self.name}: out_channels must be >= 1")


@dataclass(frozen=True)
class ConvBlockSpec:
    """A parallel section: one or two convolution branches sharing a pool."""

    branches: tuple[LayerSpec, ...]
    pool: LayerSpec


@dataclass(frozen=True)
class NetworkSpec:
    """Declarative description of one member of the architecture family."""

    input_length: int
    blocks: tuple[ConvBlockSpec, ...]
    fc: tuple[LayerSpec, ...]
    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    parallel: bool = True

    @property
    def layers(self) -> tuple[LayerSpec, ...]:
        """Flat layer sequence, with an explicit concat marker per block."""
        out: list[LayerSpec] = []
        for block in self.blocks:
            out.extend(block.branches)
            out.append(block.pool)
            if len(block.branches) > 1:
                out.append(LayerSpec(kind=LayerKind.CONCAT, name="concat"))
        for i, fc in enumerate(self.fc):
            out.append(fc)
            if i < len(self.fc) - 1:
                out.append(LayerSpec(kind=LayerKind.RELU, name=f"relu{i + 1}"))
        return tuple(out)

    @property
    def weighted_layers(self) -> tuple[LayerSpec, ...]:
        """Layers that carry weights, in weight-file order."""
        out = [b for block in self.blocks for b in block.branches]
        out.extend(self.fc)
        return tuple(out)

    @property
    def flatten_width(self) -> int:
        shapes = trace_shapes(self)
        last_block = self.blocks[-1]
        return sum(shapes[b.name].out_channels * shapes[b.name].pooled_length
                   for b in last_block.branches)


# NetworkParams maps layer name -> (weights, bias).  Conv weights have shape
# (out_channels, in_channels, kernel); FC weights have shape (in, out) so the
# affine map is y = W.T @ x + b.
NetworkParams = dict[str, tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class Signal:
    """A finite-valued input vector in normalized feature amplitude."""

    values: np.ndarray
    units: str = "normalized"

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("signal must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("signal contains non-finite values")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class LayerShape:
    """Resolved input/output geometry of one weighted layer."""

    in_channels: int = 1
    in_length: int = 0
    out_channels: int = 1
    out_length: int = 0
    pooled_length: int = 0
    in_features: int = 0
    out_features: int = 0


def trace_shapes(spec: NetworkSpec) -> dict[str, LayerShape]:
    """Resolve per-layer shapes by walking the network once."""
    shapes: dict[str, LayerShape] = {}
    length = spec.input_length
    channels = 1
    for block in spec.blocks:
        pooled = []
        for branch in block.branches:
            conv_len = conv_output_length(length, branch.kernel_size, branch.stride,
                                          branch.padding_left, branch.padding_right)
            pooled_len = pool_output_length(conv_len, block.pool.kernel_size,
                                            block.pool.stride)
            pooled.append(pooled_len)
            shapes[branch.name] = LayerShape(
                in_channels=channels, in_length=length,
                out_channels=branch.out_channels, out_length=conv_len,
                pooled_length=pooled_len,
            )
        length = min(pooled)
        channels = sum(b.out_channels for b in block.branches)
    features = sum(shapes[b.name].out_channels * shapes[b.name].pooled_length
                   for b in spec.blocks[-1].branches) if spec.blocks else spec.input_length
    for layer in spec.fc:
        shapes[layer.name] = LayerShape(in_features=layer.in_features,
                                        out_features=layer.out_features)
        if layer.in_features != features:
            raise ValueError(
                f"{layer.name}: expects {layer.in_features} inputs "
                f"but preceding layers produce {features}"
            )
        features = layer.out_features
    return shapes


def conv_output_length(length: int, kernel: int, stride: int = 1,
                       pad_left: int = 0, pad_right: int = 0) -> int:
    out = (length + pad_left + pad_right - kernel) // stride + 1
    if out < 1:
        raise ValueError(
            f"non-positive conv output length: input {length}, kernel {kernel}, "
            f"stride {stride}, padding ({pad_left}, {pad_right})"
        )
    return out


def pool_output_length(length: int, kernel: int = 2, stride: int = 2) -> int:
    if length < kernel:
        raise ValueError(f"input length {length} shorter than pool window {kernel}")
    return (length - kernel) // stride + 1


def build_network_architecture(m: int, n: int, L: int, D: int,
                               alpha, beta, parallel: bool = True) -> NetworkSpec:
    """Construct a member of the architecture family.

    Each block gets floor(n/2) filters per branch with kernel sizes alpha_l
    and m - 2 - alpha_l (parallel) or a single m - 1 kernel otherwise.  The
    first branch is padded by one sample on the left; with floor-mode 2/2
    average pooling this makes the two pooled branch lengths sum to a
    constant, so the flattened width is independent of alpha (1088 for the
    canonical sizes).  FC layer d < D - 1 has beta_d outputs; the last FC
    layer always has 2.
    """
    alpha = tuple(int(a) for a in alpha)
    beta = tuple(int(b) for b in beta)
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    if L < 1 or D < 1:
        raise ValueError("L and D must be >= 1")
    if len(alpha) != L:
        raise ValueError(f"alpha must have {L} entries, got {len(alpha)}")
    if len(beta) != D - 1:
        raise ValueError(f"beta must have {D - 1} entries, got {len(beta)}")

    filters = max(1, n // 2)
    blocks: list[ConvBlockSpec] = []
    length = m
    channels = 1
    for l in range(L):
        if parallel:
            a = alpha[l]
            if not (1 <= a <= m - 3):
                raise ValueError(f"alpha[{l}]={a} outside [1, {m - 3}]")
            kernels = (a, m - 2 - a)
        else:
            kernels = (m - 1,)
        branches = []
        for bi, k in enumerate(kernels):
            branches.append(LayerSpec(
                kind=LayerKind.CONV1D,
                name=f"conv{2 * l + bi + 1}" if parallel else f"conv{l + 1}",
                in_channels=channels,
                out_channels=filters,
                kernel_size=k,
                stride=1,
                padding_left=1 if bi == 0 else 0,
                padding_right=0,
            ))
        pool = LayerSpec(kind=LayerKind.AVGPOOL1D, name=f"pool{l + 1}",
                         kernel_size=2, stride=2)
        pooled = []
        for branch in branches:
            conv_len = conv_output_length(length, branch.kernel_size, 1,
                                          branch.padding_left, branch.padding_right)
            pooled.append(pool_output_length(conv_len, 2, 2))
        length = min(pooled)
        channels = filters * len(branches)
        blocks.append(ConvBlockSpec(branches=tuple(branches), pool=pool))

    spec_no_fc = NetworkSpec(input_length=m, blocks=tuple(blocks), fc=(),
                             alpha=alpha, beta=beta, parallel=parallel)
    in_features = spec_no_fc.flatten_width
    fc_layers: list[LayerSpec] = []
    for d in range(D):
        out_features = beta[d] if d < D - 1 else 2
        fc_layers.append(LayerSpec(
            kind=LayerKind.FULLY_CONNECTED, name=f"fc{d + 1}",
            in_features=in_features, out_features=out_features,
        ))
        in_features = out_features

    return NetworkSpec(input_length=m, blocks=tuple(blocks), fc=tuple(fc_layers),
                       alpha=alpha, beta=beta, parallel=parallel)


def canonical_network() -> NetworkSpec:
    """The deployed instance: kernels 32/30, FC 1088 -> 8 -> 2."""
    return build_network_architecture(64, 64, 1, 2, [32], [8], parallel=True)


def count_parameters(spec: NetworkSpec) -> int:
    """Total weight and bias count; pooling/ReLU layers contribute nothing."""
    total = 0
    for layer in spec.weighted_layers:
        if layer.kind is LayerKind.CONV1D:
            total += layer.out_channels * layer.in_channels * layer.kernel_size
            total += layer.out_channels
        elif layer.kind is LayerKind.FULLY_CONNECTED:
            total += layer.in_features * layer.out_features + layer.out_features
    return total


def conv1d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
           stride: int = 1, pad_left: int = 0, pad_right: int = 0) -> np.ndarray:
    """Cross-correlation of a (C_in, L) input with (C_out, C_in, k) kernels.

    out[c, i] = bias[c] + sum_{j,t} kernels[c, j, t] * x_padded[j, i*stride + t]
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    kernels = np.asarray(kernels, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    c_out, c_in, k = kernels.shape
    if x.shape[0] != c_in:
        raise ValueError(f"expected {c_in} input channels, got {x.shape[0]}")
    if bias.shape != (c_out,):
        raise ValueError("bias shape must be (out_channels,)")
    xp = np.pad(x, ((0, 0), (pad_left, pad_right)))
    n_out = conv_output_length(x.shape[1], k, stride, pad_left, pad_right)
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)
    windows = windows[:, ::stride, :][:, :n_out, :]
    return np.einsum("oct,cit->oi", kernels, windows) + bias[:, None]


def avgpool1d(x: np.ndarray, kernel: int = 2, stride: int = 2) -> np.ndarray:
    """Floor-mode average pooling over the last axis; remainder is dropped."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n_out = pool_output_length(x.shape[1], kernel, stride)
    windows = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=1)
    return windows[:, ::stride, :][:, :n_out, :].mean(axis=2)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def fully_connected(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map y = W.T @ x + b with W of shape (in, out)."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.shape[0] != weights.shape[0]:
        raise ValueError(f"expected input of {weights.shape[0]}, got {x.shape[0]}")
    if bias.shape[0] != weights.shape[1]:
        raise ValueError("bias length must equal out features")
    return weights.T @ x + bias


def _check_params(spec: NetworkSpec, params: NetworkParams) -> None:
    for layer in spec.weighted_layers:
        if layer.name not in params:
            raise ValueError(f"missing parameters for layer {layer.name}")
        w, b = params[layer.name]
        if layer.kind is LayerKind.CONV1D:
            want = (layer.out_channels, layer.in_channels, layer.kernel_size)
        else:
            want = (layer.in_features, layer.out_features)
        if tuple(w.shape) != want:
            raise ValueError(f"{layer.name}: weight shape {w.shape}, expected {want}")
        n_bias = layer.out_channels if layer.kind is LayerKind.CONV1D else layer.out_features
        if tuple(b.shape) != (n_bias,):
            raise ValueError(f"{layer.name}: bias shape {b.shape}, expected ({n_bias},)")


def forward_trace(spec: NetworkSpec, params: NetworkParams,
                  x: np.ndarray | Signal) -> dict[str, np.ndarray]:
    """Reference forward pass returning every layer input, keyed by layer name.

    The special key "logits" holds the final output.  Branch outputs are
    pooled per branch, flattened channel-major and concatenated in branch
    order (first branch = kernel alpha), which fixes the FC1 input layout.
    """
    if isinstance(x, Signal):
        x = x.values
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != spec.input_length:
        raise ValueError(f"input length {x.shape[1]} != {spec.input_length}")
    _check_params(spec, params)

    trace: dict[str, np.ndarray] = {}
    current = x
    for bi, block in enumerate(spec.blocks):
        pieces = []
        for branch in block.branches:
            trace[branch.name] = current
            w, b = params[branch.name]
            conv = conv1d(current, w, b, branch.stride,
                          branch.padding_left, branch.padding_right)
            pieces.append(avgpool1d(conv, block.pool.kernel_size, block.pool.stride))
        if bi < len(spec.blocks) - 1:
            # Channel concatenation between blocks requires equal lengths.
            shortest = min(p.shape[1] for p in pieces)
            current = np.concatenate([p[:, :shortest] for p in pieces], axis=0)
        else:
            current = np.concatenate([p.reshape(-1) for p in pieces])

    vec = current.reshape(-1)
    for i, layer in enumerate(spec.fc):
        trace[layer.name] = vec
        w, b = params[layer.name]
        vec = fully_connected(vec, w, b)
        if i < len(spec.fc) - 1:
            vec = relu(vec)
    trace["logits"] = vec
    return trace


def forward(spec: NetworkSpec, params: NetworkParams, x: np.ndarray | Signal) -> np.ndarray:
    """Float64 reference forward pass; returns the 2 logits."""
    return forward_trace(spec, params, x)["logits"]


def random_params(spec: NetworkSpec, rng: np.random.Generator,
                  scale: float = 0.2) -> NetworkParams:
    """Gaussian parameters with matching shapes, for tests and demos."""
    params: NetworkParams = {}
    for layer in spec.weighted_layers:
        if layer.kind is LayerKind.CONV1D:
            w = rng.normal(0.0, scale, (layer.out_channels, layer.in_channels,
                                        layer.kernel_size))
            b = rng.normal(0.0, scale, layer.out_channels)
        else:
            w = rng.normal(0.0, scale, (layer.in_features, layer.out_features))
            b = rng.normal(0.0, scale, layer.out_features)
        params[layer.name] = (w, b)
    return params


def quantize_fixed(x, bits: int, lo: float, hi: float) -> np.ndarray:
    """Uniform quantizer: 2**bits levels spanning [lo, hi] inclusive.

    Values are clipped into [lo, hi] and rounded to the nearest of the
    2**bits evenly spaced levels (step = (hi - lo) / (2**bits - 1)), so the
    map is idempotent, monotone, and within step/2 of any in-range input.
    """
    if bits < 1:
        raise ValueError("bits must be >= 1")
    if not lo < hi:
        raise ValueError("empty quantization range")
    x = np.asarray(x, dtype=np.float64)
    n_levels = 2 ** bits
    step = (hi - lo) / (n_levels - 1)
    idx = np.round((np.clip(x, lo, hi) - lo) / step)
    return lo + idx * step


def quantize_params(params: NetworkParams, bits: int) -> NetworkParams:
    """Per-tensor symmetric weight/bias quantization to 2**bits levels."""
    out: NetworkParams = {}
    for name, (w, b) in params.items():
        limit_w = float(np.max(np.abs(w))) or 1.0
        limit_b = float(np.max(np.abs(b))) or 1.0
        out[name] = (quantize_fixed(w, bits, -limit_w, limit_w),
                     quantize_fixed(b, bits, -limit_b, limit_b))
    return out
