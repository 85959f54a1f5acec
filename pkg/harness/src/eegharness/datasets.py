"""Dataset ingestion: Bonn text files, EDF recordings, SWEC archives.

Bonn series are single-channel integer-per-line text files; sets A/B are
surface recordings of healthy subjects, C/D seizure-free intervals, and
E seizure activity (directory names A-E or the original Z/O/N/F/S are
both accepted).  Detection uses sets A vs E, chopped into 64-sample
windows fed to the network directly, without any preprocessing.

EDF reading implements the fixed-layout EDF header and 16-bit sample
records directly; CHB-MIT seizure times come from the chbXX-summary.txt
files.  SWEC-ETHZ archives are MATLAB files read through scipy/h5py.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class RecordingSegment:
    """Multichannel recording plus seizure annotations in seconds."""

    data: np.ndarray                   # (channels, samples)
    rate: float
    seizures: list[tuple[float, float]] = field(default_factory=list)
    patient: str = ""
    name: str = ""

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("sampling rate must be positive")
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        duration = self.data.shape[1] / self.rate
        for onset, offset in self.seizures:
            if not (0 <= onset <= offset <= duration + 1e-9):
                raise ValueError(f"annotation ({onset}, {offset}) outside recording")

    @property
    def duration_s(self) -> float:
        return self.data.shape[1] / self.rate


_BONN_ALIASES = {"A": "Z", "B": "O", "C": "N", "D": "F", "E": "S"}


def load_bonn_set(root, name: str) -> list[np.ndarray]:
    """All series of one Bonn set, as float arrays."""
    root = Path(root)
    candidates = [name, name.lower(), _BONN_ALIASES.get(name, name),
                  _BONN_ALIASES.get(name, name).lower()]
    directory = next((root / c for c in candidates if (root / c).is_dir()), None)
    if directory is None:
        raise FileNotFoundError(f"Bonn set {name} not found under {root}")
    series = []
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in (".txt", ".dat", ""):
            continue
        values = np.array([float(line) for line in path.read_text().split()])
        if values.size:
            series.append(values)
    if not series:
        raise FileNotFoundError(f"no series files in {directory}")
    return series


def bonn_windows(root, sets=("A", "E"), window: int = 64):
    """64-sample windows and ictal labels for a Bonn detection task."""
    samples, labels = [], []
    for set_name in sets:
        label = 1 if set_name.upper() in ("E", "S") else 0
        for series in load_bonn_set(root, set_name.upper()):
            n = series.size // window
            for i in range(n):
                samples.append(series[i * window:(i + 1) * window])
                labels.append(label)
    return np.array(samples), np.array(labels)


def read_edf(path, max_channels: int | None = None):
    """Minimal EDF reader: returns (signals, rates, labels).

    Signals come back as a list of float arrays in physical units; only
    the common 16-bit sample encoding is supported.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 256:
        raise ValueError(f"{path}: truncated EDF header")

    def ascii_field(offset, size):
        return raw[offset:offset + size].decode("ascii", "replace").strip()

    n_records = int(ascii_field(236, 8))
    record_s = float(ascii_field(244, 8))
    n_signals = int(ascii_field(252, 4))
    off = 256

    def signal_fields(size):
        nonlocal off
        out = [raw[off + i * size:off + (i + 1) * size].decode("ascii", "replace").strip()
               for i in range(n_signals)]
        off += size * n_signals
        return out

    labels = signal_fields(16)
    signal_fields(80)   # transducer
    signal_fields(8)    # physical dimension
    phys_min = [float(x) for x in signal_fields(8)]
    phys_max = [float(x) for x in signal_fields(8)]
    dig_min = [float(x) for x in signal_fields(8)]
    dig_max = [float(x) for x in signal_fields(8)]
    signal_fields(80)   # prefiltering
    samples_per_record = [int(x) for x in signal_fields(8)]
    signal_fields(32)   # reserved

    take = n_signals if max_channels is None else min(n_signals, max_channels)
    signals = [np.empty(n_records * samples_per_record[s]) for s in range(take)]
    rates = [samples_per_record[s] / record_s for s in range(take)]
    pos = off
    for rec in range(n_records):
        for s in range(n_signals):
            count = samples_per_record[s]
            chunk = np.frombuffer(raw, dtype="<i2", count=count, offset=pos)
            pos += 2 * count
            if s < take:
                span = dig_max[s] - dig_min[s]
                gain = (phys_max[s] - phys_min[s]) / span if span else 1.0
                signals[s][rec * count:(rec + 1) * count] = \
                    (chunk - dig_min[s]) * gain + phys_min[s]
    return signals, rates, labels[:take]


def parse_chb_summary(text: str) -> dict[str, list[tuple[float, float]]]:
    """Seizure intervals per EDF file from a chbXX-summary.txt body."""
    out: dict[str, list[tuple[float, float]]] = {}
    current = None
    starts: list[float] = []
    for line in text.splitlines():
        m = re.match(r"File Name:\s*(\S+)", line)
        if m:
            current = m.group(1)
            out[current] = []
            starts = []
            continue
        m = re.match(r"Seizure(?:\s+\d+)?\s+Start Time:\s*(\d+)", line)
        if m and current:
            starts.append(float(m.group(1)))
            continue
        m = re.match(r"Seizure(?:\s+\d+)?\s+End Time:\s*(\d+)", line)
        if m and current and starts:
            out[current].append((starts.pop(0), float(m.group(1))))
    return out


def load_chb_recording(edf_path, seizures=None, n_channels: int = 22,
                       target_rate: float = 256.0) -> RecordingSegment:
    """One CHB-MIT EDF file as a RecordingSegment (first n channels)."""
    signals, rates, _ = read_edf(edf_path, max_channels=n_channels)
    if len(signals) < n_channels:
        raise ValueError(f"{edf_path}: only {len(signals)} channels")
    resampled = [resample_to(sig, rate, target_rate)
                 for sig, rate in zip(signals, rates)]
    shortest = min(len(s) for s in resampled)
    data = np.stack([s[:shortest] for s in resampled])
    return RecordingSegment(data=data, rate=target_rate,
                            seizures=list(seizures or []),
                            name=Path(edf_path).name)


def load_swec_recording(mat_path, info_path=None, n_channels: int = 22,
                        target_rate: float = 256.0) -> RecordingSegment:
    """One SWEC-ETHZ archive block as a RecordingSegment."""
    data, rate = _load_mat_eeg(mat_path)
    data = data[:n_channels]
    resampled = np.stack([resample_to(ch, rate, target_rate) for ch in data])
    seizures = []
    if info_path is not None:
        seizures = _load_mat_seizures(info_path)
    return RecordingSegment(data=resampled, rate=target_rate,
                            seizures=seizures, name=Path(mat_path).name)


def _load_mat_eeg(path):
    try:
        from scipy.io import loadmat
        doc = loadmat(path)
        key = next(k for k in doc if not k.startswith("__"))
        arr = np.asarray(doc[key], dtype=np.float64)
        rate = float(doc.get("fs", np.array([[512.0]])).squeeze())
    except NotImplementedError:  # v7.3 files are HDF5
        import h5py
        with h5py.File(path, "r") as f:
            key = next(iter(f.keys()))
            arr = np.asarray(f[key], dtype=np.float64)
            rate = float(np.asarray(f.get("fs", 512.0)).squeeze()) \
                if "fs" in f else 512.0
    if arr.shape[0] > arr.shape[1]:
        arr = arr.T
    return arr, rate


def _load_mat_seizures(path):
    from scipy.io import loadmat
    doc = loadmat(path)
    begins = np.atleast_1d(doc.get("seizure_begin", np.empty(0))).ravel()
    ends = np.atleast_1d(doc.get("seizure_end", np.empty(0))).ravel()
    return [(float(b), float(e)) for b, e in zip(begins, ends)]


def resample_to(x: np.ndarray, rate: float, target: float) -> np.ndarray:
    """Polyphase resampling to the target rate (no-op when equal)."""
    if rate == target:
        return np.asarray(x, dtype=np.float64)
    from fractions import Fraction

    from scipy.signal import resample_poly
    frac = Fraction(target / rate).limit_denominator(1000)
    return resample_poly(np.asarray(x, dtype=np.float64),
                         frac.numerator, frac.denominator)
