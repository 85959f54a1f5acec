"""The parallel-branch 1D CNN in PyTorch, with optional fake quantization.

Branch one pads a single sample on the left; with floor-mode 2/2 average
pooling both branches pool to 17 positions on a 64-long input, giving
the 1088-wide flatten (branch one's channels first, channel-major) that
the exported weight layout assumes.

Quantization-aware training keeps weights and the input at a reduced
resolution inside the forward pass via a straight-through estimator;
intermediate activations stay full precision.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


class _RoundSTE(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        return torch.round(x)

    @staticmethod
    def backward(ctx, grad):
        return grad


def fake_quantize(x: torch.Tensor, bits: int, lo: float, hi: float) -> torch.Tensor:
    """Uniform fake quantization: 2**bits levels over [lo, hi], STE gradient."""
    step = (hi - lo) / (2 ** bits - 1)
    idx = _RoundSTE.apply((torch.clamp(x, lo, hi) - lo) / step)
    return lo + idx * step


def quantize_weight_tensor(w: torch.Tensor, bits: int) -> torch.Tensor:
    limit = w.detach().abs().max().clamp_min(1e-12)
    return fake_quantize(w, bits, -float(limit), float(limit))


class ParallelCNN(nn.Module):
    def __init__(self, input_length: int = 64, k1: int = 32, k2: int = 30,
                 filters: int = 32, hidden: int = 8,
                 weight_bits: int | None = None,
                 input_bits: int | None = None, input_range: float = 1.0):
        super().__init__()
        self.k1, self.k2 = k1, k2
        self.weight_bits = weight_bits
        self.input_bits = input_bits
        self.input_range = float(input_range)
        self.conv1 = nn.Conv1d(1, filters, k1)
        self.conv2 = nn.Conv1d(1, filters, k2)
        pooled1 = (input_length + 1 - k1 + 1) // 2
        pooled2 = (input_length - k2 + 1) // 2
        self.flat = filters * (pooled1 + pooled2)
        self.fc1 = nn.Linear(self.flat, hidden)
        self.fc2 = nn.Linear(hidden, 2)

    def _weights(self, module):
        if self.weight_bits is None:
            return module.weight
        return quantize_weight_tensor(module.weight, self.weight_bits)

    def forward(self, x):
        if x.dim() == 2:
            x = x[:, None, :]
        if self.input_bits is not None:
            r = self.input_range
            x = fake_quantize(x, self.input_bits, -r, r)
        b1 = F.conv1d(F.pad(x, (1, 0)), self._weights(self.conv1),
                      self.conv1.bias)
        b2 = F.conv1d(x, self._weights(self.conv2), self.conv2.bias)
        b1 = F.avg_pool1d(b1, 2, 2)
        b2 = F.avg_pool1d(b2, 2, 2)
        h = torch.cat([b1.flatten(1), b2.flatten(1)], dim=1)
        h = F.relu(F.linear(h, self._weights(self.fc1), self.fc1.bias))
        return F.linear(h, self._weights(self.fc2), self.fc2.bias)

    def export_params(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Effective (possibly quantized) parameters in the exchange layout.

        Conv weights stay (out, in, kernel); FC weights transpose to
        (in, out).  Quantized models export their quantized weights so
        the simulator sees exactly what training converged to.
        """
        def grab(module, transpose=False):
            w = self._weights(module).detach().cpu().numpy().astype(np.float64)
            b = module.bias.detach().cpu().numpy().astype(np.float64)
            return (w.T if transpose else w, b)

        return {
            "conv1": grab(self.conv1),
            "conv2": grab(self.conv2),
            "fc1": grab(self.fc1, transpose=True),
            "fc2": grab(self.fc2, transpose=True),
        }
