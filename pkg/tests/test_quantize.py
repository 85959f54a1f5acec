import numpy as np
import pytest

from xbarsim.network import quantize_fixed, quantize_params


def levels(bits, lo, hi):
    step = (hi - lo) / (2 ** bits - 1)
    return lo + step * np.arange(2 ** bits)


class TestQuantizeFixed:
    def test_one_bit(self):
        assert quantize_fixed(0.4, 1, 0.0, 1.0) == 0.0
        assert quantize_fixed(0.6, 1, 0.0, 1.0) == 1.0

    def test_idempotent(self, rng):
        x = rng.normal(0, 2, 500)
        q = quantize_fixed(x, 5, -1.0, 1.0)
        np.testing.assert_array_equal(quantize_fixed(q, 5, -1.0, 1.0), q)

    def test_monotone(self, rng):
        x = np.sort(rng.normal(0, 2, 500))
        q = quantize_fixed(x, 6, -1.0, 1.0)
        assert np.all(np.diff(q) >= 0)

    def test_half_step_bound_derived_from_levels(self):
        # nearest of the 64 levels over [-1, 1]; expected value frozen from
        # enumerating the level grid
        grid = levels(6, -1.0, 1.0)
        want = grid[np.argmin(np.abs(grid - 0.5))]
        got = quantize_fixed(0.5, 6, -1.0, 1.0)
        assert got == pytest.approx(want, abs=0)
        assert abs(0.5 - got) <= (2.0 / 63) / 2

    def test_exactly_2_pow_bits_levels_exhaustive(self):
        xs = np.linspace(-1.5, 1.5, 40001)
        q = quantize_fixed(xs, 6, -1.0, 1.0)
        uniq = np.unique(q)
        assert uniq.size == 64
        np.testing.assert_allclose(uniq, levels(6, -1.0, 1.0), atol=1e-15)

    def test_max_error_half_step_exhaustive(self):
        xs = np.linspace(-1.0, 1.0, 40001)
        q = quantize_fixed(xs, 6, -1.0, 1.0)
        step = 2.0 / 63
        assert np.max(np.abs(xs - q)) <= step / 2 + 1e-15

    def test_out_of_range_clipped(self):
        assert quantize_fixed(5.0, 4, -1.0, 1.0) == 1.0
        assert quantize_fixed(-5.0, 4, -1.0, 1.0) == -1.0

    def test_empty_range_rejected(self):
        with pytest.raises(ValueError):
            quantize_fixed(0.0, 4, 1.0, 1.0)
        with pytest.raises(ValueError):
            quantize_fixed(0.0, 0, 0.0, 1.0)


class TestQuantizeParams:
    def test_idempotent_per_tensor(self, rng):
        params = {"fc1": (rng.normal(size=(4, 3)), rng.normal(size=3))}
        q1 = quantize_params(params, 6)
        q2 = quantize_params(q1, 6)
        np.testing.assert_array_equal(q1["fc1"][0], q2["fc1"][0])

    def test_range_tracks_tensor_peak(self):
        params = {"fc1": (np.array([[0.5, -2.0]]), np.zeros(2))}
        q = quantize_params(params, 6)
        assert np.max(np.abs(q["fc1"][0])) <= 2.0
        assert q["fc1"][0][0, 1] == -2.0
