"""Per-channel statistics and SVD-based dimensionality reduction.

Eight statistics per channel: mean, variance, skewness, kurtosis,
coefficient of variation, median absolute deviation of the raw
amplitude, median absolute deviation of the RMS-smoothed amplitude, and
Shannon entropy over a 64-bin amplitude histogram.  Skewness and
kurtosis are population moments and defined as 0 for constant signals;
the coefficient of variation is 0 when the mean vanishes.

PCA is a plain SVD on centered data.  Fit it on training folds only and
apply the frozen transform everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_STATS = 8
ENTROPY_BINS = 64
RMS_WINDOW = 16


def rms_smooth(x: np.ndarray, window: int = RMS_WINDOW) -> np.ndarray:
    """Sliding root-mean-square amplitude (trailing window, same length)."""
    x = np.asarray(x, dtype=np.float64)
    sq = np.concatenate([np.zeros(1), np.cumsum(x * x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return np.sqrt((sq[idx] - sq[lo]) / (idx - lo))


def shannon_entropy(x: np.ndarray, bins: int = ENTROPY_BINS) -> float:
    """Entropy (bits) of the amplitude histogram; 0 for a constant signal."""
    x = np.asarray(x, dtype=np.float64)
    if np.ptp(x) == 0:
        return 0.0
    counts, _ = np.histogram(x, bins=bins)
    p = counts[counts > 0] / x.size
    return float(-(p * np.log2(p)).sum())


def channel_stats(x: np.ndarray) -> np.ndarray:
    """The eight named statistics of one channel window."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean()
    var = x.var()
    if var > 0:
        centered = x - mean
        skew = (centered ** 3).mean() / var ** 1.5
        kurt = (centered ** 4).mean() / var ** 2
    else:
        skew = kurt = 0.0
    std = np.sqrt(var)
    cv = std / abs(mean) if abs(mean) > 1e-12 else 0.0
    mad = float(np.median(np.abs(x - np.median(x))))
    smoothed = rms_smooth(x)
    mad_rms = float(np.median(np.abs(smoothed - np.median(smoothed))))
    return np.array([mean, var, skew, kurt, cv, mad, mad_rms,
                     shannon_entropy(x)])


def extract_features(window: np.ndarray, n_channels: int = 22,
                     rate: float | None = 256.0,
                     expected_rate: float = 256.0) -> np.ndarray:
    """8 statistics per channel of a (channels, samples) window.

    Channel count and sampling rate are validated against the pipeline's
    expectations; pass rate=None to skip the rate check.
    """
    window = np.atleast_2d(np.asarray(window, dtype=np.float64))
    if window.shape[0] != n_channels:
        raise ValueError(f"expected {n_channels} channels, got {window.shape[0]}")
    if rate is not None and rate != expected_rate:
        raise ValueError(f"expected {expected_rate} Hz, got {rate}")
    return np.concatenate([channel_stats(ch) for ch in window])


@dataclass
class PCA:
    """Linear dimensionality reduction via SVD on centered data."""

    n_components: int
    mean_: np.ndarray | None = None
    components_: np.ndarray | None = None   # (n_components, n_features)

    def fit(self, X: np.ndarray) -> "PCA":
        X = np.asarray(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        _, _, vt = np.linalg.svd(X - self.mean_, full_matrices=False)
        if vt.shape[0] < self.n_components:
            raise ValueError(
                f"only {vt.shape[0]} principal axes available, "
                f"need {self.n_components}"
            )
        self.components_ = vt[:self.n_components]
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.components_ is None:
            raise RuntimeError("PCA transform used before fit")
        return (np.asarray(X, dtype=np.float64) - self.mean_) @ self.components_.T

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) @ self.components_ + self.mean_

    def project(self, X: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the retained subspace (idempotent)."""
        return self.inverse_transform(self.transform(X))
