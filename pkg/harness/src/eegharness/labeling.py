"""Window extraction and preictal/interictal labeling.

For a seizure at onset t, the band [t - SOP - SPH, t - SOP] supplies
preictal windows and the SOP band [t - SOP, t) is discarded; seizures
whose onset falls inside the initial monitoring period are dropped
entirely.  Interictal windows come from hour-long stretches containing
no seizure at all.  Synthetic preictal windows oversample the band by
sliding with a half-window stride.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import RecordingSegment

INTERICTAL = 0
PREICTAL = 1


@dataclass
class LabeledWindow:
    data: np.ndarray        # (channels, samples)
    label: int
    patient: str = ""
    segment: str = ""
    synthetic: bool = False

    def __post_init__(self):
        if self.synthetic and self.label != PREICTAL:
            raise ValueError("synthetic windows only come from preictal bands")


def preictal_band(onset_s: float, sop_s: float = 1800.0,
                  sph_s: float = 300.0) -> tuple[float, float]:
    """[onset - SOP - SPH, onset - SOP], clipped at the recording start."""
    return max(onset_s - sop_s - sph_s, 0.0), max(onset_s - sop_s, 0.0)


def _window_starts(begin_s, end_s, window_s, stride_s):
    starts = []
    t = begin_s
    while t + window_s <= end_s + 1e-9:
        starts.append(t)
        t += stride_s
    return starts


def synthetic_window_count(band_s: float, window_s: float = 64.0,
                           stride_s: float = 32.0) -> int:
    if band_s < window_s:
        return 0
    return int((band_s - window_s) // stride_s) + 1


def label_windows(segment: RecordingSegment, sop_s: float = 1800.0,
                  sph_s: float = 300.0, window_s: float = 64.0,
                  min_onset_s: float = 1200.0,
                  interictal_chunk_s: float = 3600.0,
                  synthetic_stride_s: float = 32.0) -> list[LabeledWindow]:
    """All labeled windows of one annotated segment (may be empty)."""
    windows: list[LabeledWindow] = []
    rate = segment.rate
    w = int(round(window_s * rate))

    def cut(start_s):
        i = int(round(start_s * rate))
        return segment.data[:, i:i + w]

    onsets = [on for on, _ in segment.seizures if on >= min_onset_s]

    # preictal: contiguous windows in the SPH band, plus overlapped
    # synthetic ones (strided at half a window)
    for onset in onsets:
        lo, hi = preictal_band(onset, sop_s, sph_s)
        plain = _window_starts(lo, hi, window_s, window_s)
        for t in plain:
            windows.append(LabeledWindow(cut(t), PREICTAL, segment.patient,
                                         segment.name))
        for t in _window_starts(lo, hi, window_s, synthetic_stride_s):
            if t not in plain:
                windows.append(LabeledWindow(cut(t), PREICTAL, segment.patient,
                                             segment.name, synthetic=True))

    # interictal: hour chunks that contain no seizure activity at all
    n_chunks = int(segment.duration_s // interictal_chunk_s)
    for c in range(n_chunks):
        chunk_lo = c * interictal_chunk_s
        chunk_hi = chunk_lo + interictal_chunk_s
        if any(on < chunk_hi and off > chunk_lo for on, off in segment.seizures):
            continue
        for t in _window_starts(chunk_lo, chunk_hi, window_s, window_s):
            windows.append(LabeledWindow(cut(t), INTERICTAL, segment.patient,
                                         segment.name))
    return windows
