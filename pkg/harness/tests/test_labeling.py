import numpy as np
import pytest

from eegharness.datasets import RecordingSegment
from eegharness.labeling import (
    INTERICTAL,
    PREICTAL,
    LabeledWindow,
    label_windows,
    preictal_band,
    synthetic_window_count,
)


def segment(duration_s, seizures=(), rate=4.0, channels=2):
    n = int(duration_s * rate)
    data = np.arange(channels * n, dtype=float).reshape(channels, n)
    return RecordingSegment(data=data, rate=rate, seizures=list(seizures),
                            patient="p1", name="seg")


class TestBands:
    def test_seizure_at_40_minutes(self):
        # SOP 30 min / SPH 5 min: preictal band [t-35, t-30] minutes
        lo, hi = preictal_band(40 * 60)
        assert (lo, hi) == (5 * 60, 10 * 60)

    def test_band_clipped_at_recording_start(self):
        lo, hi = preictal_band(31 * 60)
        assert lo == 0.0
        assert hi == 60.0

    def test_synthetic_window_count_formula(self):
        # floor((band - 64) / 32) + 1
        assert synthetic_window_count(96.0) == 2
        assert synthetic_window_count(64.0) == 1
        assert synthetic_window_count(63.0) == 0
        assert synthetic_window_count(160.0) == 4


class TestLabelWindows:
    def test_no_seizures_gives_interictal_only(self):
        windows = label_windows(segment(2 * 3600))
        assert windows
        assert all(w.label == INTERICTAL for w in windows)
        assert len(windows) == 2 * 3600 // 64

    def test_preictal_windows_from_sph_band(self):
        seg = segment(3.0 * 3600, seizures=[(40 * 60, 41 * 60)])
        windows = label_windows(seg)
        pre = [w for w in windows if w.label == PREICTAL]
        # 300 s band: 4 contiguous windows; 8 strided starts total, so 4
        # extra synthetic offsets
        assert len([w for w in pre if not w.synthetic]) == 4
        assert len([w for w in pre if w.synthetic]) == 4
        assert all(w.data.shape == (2, 256) for w in pre)

    def test_early_seizure_dropped(self):
        seg = segment(2 * 3600, seizures=[(10 * 60, 11 * 60)])
        windows = label_windows(seg)
        assert all(w.label == INTERICTAL for w in windows)
        # the seizure hour is still excluded from interictal chunks
        assert len(windows) == 3600 // 64

    def test_interictal_excludes_seizure_hours(self):
        seg = segment(2 * 3600, seizures=[(30 * 60, 31 * 60)])
        windows = label_windows(seg)
        inter = [w for w in windows if w.label == INTERICTAL]
        assert len(inter) == 3600 // 64  # only the second, seizure-free hour

    def test_empty_result_allowed(self):
        windows = label_windows(segment(120.0))
        assert windows == []

    def test_synthetic_flag_only_on_preictal(self):
        with pytest.raises(ValueError):
            LabeledWindow(np.zeros((1, 4)), INTERICTAL, synthetic=True)
