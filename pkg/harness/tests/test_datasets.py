import numpy as np
import pytest

from eegharness import datasets


def write_edf(path, signals, rate, record_s=1.0):
    """Handcrafted minimal EDF file for reader tests."""
    n_signals = len(signals)
    samples_per_record = int(rate * record_s)
    n_records = len(signals[0]) // samples_per_record
    phys_min, phys_max = -500.0, 500.0
    dig_min, dig_max = -32768, 32767

    def pad(text, size):
        return text.ljust(size)[:size].encode("ascii")

    header = b"".join([
        pad("0", 8), pad("patient", 80), pad("recording", 80),
        pad("01.01.20", 8), pad("00.00.00", 8),
        pad(str(256 + 256 * n_signals), 8), pad("", 44),
        pad(str(n_records), 8), pad(str(record_s), 8), pad(str(n_signals), 4),
    ])
    per = b"".join([
        b"".join(pad(f"ch{i}", 16) for i in range(n_signals)),
        b"".join(pad("", 80) for _ in range(n_signals)),
        b"".join(pad("uV", 8) for _ in range(n_signals)),
        b"".join(pad(str(phys_min), 8) for _ in range(n_signals)),
        b"".join(pad(str(phys_max), 8) for _ in range(n_signals)),
        b"".join(pad(str(dig_min), 8) for _ in range(n_signals)),
        b"".join(pad(str(dig_max), 8) for _ in range(n_signals)),
        b"".join(pad("", 80) for _ in range(n_signals)),
        b"".join(pad(str(samples_per_record), 8) for _ in range(n_signals)),
        b"".join(pad("", 32) for _ in range(n_signals)),
    ])
    gain = (phys_max - phys_min) / (dig_max - dig_min)
    body = b""
    for rec in range(n_records):
        for sig in signals:
            chunk = sig[rec * samples_per_record:(rec + 1) * samples_per_record]
            digital = np.round((chunk - phys_min) / gain + dig_min).astype("<i2")
            body += digital.tobytes()
    path.write_bytes(header + per + body)


class TestEdfReader:
    def test_roundtrip(self, tmp_path, rng):
        signals = [rng.uniform(-400, 400, 512) for _ in range(3)]
        path = tmp_path / "test.edf"
        write_edf(path, signals, rate=256.0)
        got, rates, labels = datasets.read_edf(path)
        assert rates == [256.0, 256.0, 256.0]
        assert labels == ["ch0", "ch1", "ch2"]
        for a, b in zip(got, signals):
            np.testing.assert_allclose(a, b, atol=0.05)

    def test_channel_limit(self, tmp_path, rng):
        signals = [rng.uniform(-1, 1, 256) for _ in range(4)]
        path = tmp_path / "test.edf"
        write_edf(path, signals, rate=256.0)
        got, rates, _ = datasets.read_edf(path, max_channels=2)
        assert len(got) == 2 and len(rates) == 2

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "short.edf"
        path.write_bytes(b"0" * 100)
        with pytest.raises(ValueError, match="truncated"):
            datasets.read_edf(path)


class TestChbSummary:
    def test_parse(self):
        text = """File Name: chb01_03.edf
File Start Time: 13:43:04
Number of Seizures in File: 1
Seizure Start Time: 2996 seconds
Seizure End Time: 3036 seconds

File Name: chb01_04.edf
Number of Seizures in File: 0
"""
        got = datasets.parse_chb_summary(text)
        assert got == {"chb01_03.edf": [(2996.0, 3036.0)],
                       "chb01_04.edf": []}

    def test_parse_numbered_seizures(self):
        text = """File Name: chb02_16.edf
Number of Seizures in File: 2
Seizure 1 Start Time: 130 seconds
Seizure 1 End Time: 212 seconds
Seizure 2 Start Time: 2972 seconds
Seizure 2 End Time: 3053 seconds
"""
        got = datasets.parse_chb_summary(text)
        assert got["chb02_16.edf"] == [(130.0, 212.0), (2972.0, 3053.0)]


class TestBonn:
    @pytest.fixture()
    def bonn_dir(self, tmp_path, rng):
        for name, amplitude in (("A", 40.0), ("E", 900.0)):
            d = tmp_path / name
            d.mkdir()
            for i in range(3):
                series = rng.normal(0, amplitude, 256).astype(int)
                (d / f"{name}{i:03d}.txt").write_text(
                    "\n".join(str(v) for v in series))
        return tmp_path

    def test_windows_and_labels(self, bonn_dir):
        X, y = datasets.bonn_windows(bonn_dir, sets=("A", "E"), window=64)
        assert X.shape == (2 * 3 * 4, 64)
        assert set(y) == {0, 1}
        assert y.sum() == 12

    def test_alias_directories(self, tmp_path, rng):
        d = tmp_path / "S"  # original Bonn name for set E
        d.mkdir()
        (d / "S001.txt").write_text("\n".join(["1"] * 128))
        series = datasets.load_bonn_set(tmp_path, "E")
        assert len(series) == 1 and series[0].size == 128

    def test_missing_set_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            datasets.load_bonn_set(tmp_path, "A")


class TestResampling:
    def test_downsample_preserves_tone(self):
        rate, target = 512.0, 256.0
        t = np.arange(0, 4, 1 / rate)
        x = np.sin(2 * np.pi * 10 * t)
        y = datasets.resample_to(x, rate, target)
        assert y.size == x.size // 2
        t2 = np.arange(y.size) / target
        np.testing.assert_allclose(y[100:-100], np.sin(2 * np.pi * 10 * t2)[100:-100],
                                   atol=0.02)

    def test_segment_validation(self):
        with pytest.raises(ValueError, match="annotation"):
            datasets.RecordingSegment(np.zeros((1, 100)), rate=1.0,
                                      seizures=[(50.0, 200.0)])
