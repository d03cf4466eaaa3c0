"""Butterworth design, zero-phase filtering and window segmentation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from myorepeat.dsp import (
    design_butter2_lowpass, filter_recording, filtfilt, ms_to_samples, segment_windows,
)
from myorepeat.errors import InvalidCutoff, NoWindowsWarning, SignalTooShort
from myorepeat.recording import AMBIGUOUS, Recording


def _rec(labels, channels=2, rate=100.0, seed=0):
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    return Recording(rng.random((labels.size, channels)), np.arange(labels.size) / rate,
                     labels, rate)


class TestDesign:
    @pytest.mark.parametrize("fc,fs", [(1, 100), (5, 100), (1, 1000), (40, 100), (0.01, 10)])
    def test_invariants(self, fc, fs):
        c = design_butter2_lowpass(fc, fs)
        assert c.a[0] == 1.0
        assert c.b.sum() / c.a.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.abs(c.poles()) < 1)
        assert abs(c.frequency_response([fc])[0]) == pytest.approx(1 / math.sqrt(2), abs=1e-9)

    def test_monotone_magnitude(self):
        c = design_butter2_lowpass(1.0, 100.0)
        mag = np.abs(c.frequency_response(np.linspace(0, 49.9, 500)))
        assert np.all(np.diff(mag) < 0)
        assert mag[0] == pytest.approx(1.0)

    def test_matches_analog_prototype_in_warped_frequency(self):
        # the bilinear transform maps f onto the analog axis (fs/pi) tan(pi f / fs)
        fc, fs = 1.0, 100.0
        c = design_butter2_lowpass(fc, fs)
        f = np.logspace(-2, math.log10(45), 100)
        warped = np.tan(np.pi * f / fs) / np.tan(np.pi * fc / fs)
        expect = 1 / np.sqrt(1 + warped**4)
        np.testing.assert_allclose(np.abs(c.frequency_response(f)), expect, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("fc", [0.0, -1.0, 50.0, 70.0])
    def test_invalid_cutoff(self, fc):
        with pytest.raises(InvalidCutoff):
            design_butter2_lowpass(fc, 100.0)


class TestFiltfilt:
    coeffs = design_butter2_lowpass(1.0, 100.0)

    def test_constant(self):
        y = filtfilt(self.coeffs, np.full(500, 3.25))
        np.testing.assert_allclose(y, 3.25, atol=1e-9)

    def test_zero(self):
        assert np.all(filtfilt(self.coeffs, np.zeros(50)) == 0)

    def test_cutoff_sinusoid_half_amplitude(self):
        t = np.arange(20000) / 100.0
        y = filtfilt(self.coeffs, np.sin(2 * np.pi * t))
        mid = y[5000:15000]
        amp = np.sqrt(2 * np.mean(mid**2))
        assert amp == pytest.approx(0.5, rel=0.02)

    def test_multichannel_matches_columns(self):
        x = np.random.default_rng(1).normal(size=(300, 3))
        y = filtfilt(self.coeffs, x)
        for c in range(3):
            np.testing.assert_allclose(y[:, c], filtfilt(self.coeffs, x[:, c]), atol=1e-14)

    def test_too_short(self):
        with pytest.raises(SignalTooShort):
            filtfilt(self.coeffs, np.ones(6))
        assert filtfilt(self.coeffs, np.ones(7)).shape == (7,)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(7, 400), st.integers(0, 2**31))
    def test_time_reversal_symmetry(self, n, seed):
        x = np.random.default_rng(seed).normal(size=n)
        y = filtfilt(self.coeffs, x)
        np.testing.assert_allclose(y, filtfilt(self.coeffs, x[::-1])[::-1], atol=1e-9)

    def test_filter_recording_keeps_metadata(self):
        rec = _rec(np.zeros(100, int))
        out = filter_recording(rec, 1.0)
        assert out.samples.shape == rec.samples.shape
        np.testing.assert_array_equal(out.labels, rec.labels)


class TestWindows:
    def test_uniform_labels(self):
        wins = segment_windows(_rec(np.full(400, 3)), 200, 10)
        assert len(wins) == 381
        assert all(w.samples.shape == (20, 2) and w.label == 3 for w in wins)
        assert [w.start_index for w in wins[:3]] == [0, 1, 2]

    def test_all_ambiguous(self):
        assert segment_windows(_rec(np.full(100, AMBIGUOUS)), 200, 10) == []

    def test_window_length(self):
        wins = segment_windows(_rec(np.zeros(50, int)), 100, 10)
        assert all(w.samples.shape[0] == 10 for w in wins)

    def test_window_longer_than_recording(self):
        with pytest.warns(NoWindowsWarning):
            assert segment_windows(_rec(np.zeros(10, int)), 200, 10) == []

    def test_step_larger_than_one_sample(self):
        wins = segment_windows(_rec(np.zeros(100, int)), 200, 50)
        assert [w.start_index for w in wins] == [0, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50,
                                                 55, 60, 65, 70, 75, 80]

    def test_fractional_samples_rejected(self):
        with pytest.raises(ValueError):
            ms_to_samples(15, 100.0)

    @pytest.mark.filterwarnings("ignore::myorepeat.errors.NoWindowsWarning")
    @given(st.lists(st.tuples(st.integers(-1, 17), st.integers(1, 60)), min_size=1, max_size=10))
    def test_homogeneous_and_counted(self, runs):
        labels = np.concatenate([[v] * n for v, n in runs])
        rec = _rec(labels)
        wins = segment_windows(rec, 200, 10)
        for w in wins:
            seg = rec.labels[w.start_index:w.start_index + 20]
            assert np.all(seg == w.label) and w.label != AMBIGUOUS
        # merge equal neighbours into maximal runs before counting
        change = np.flatnonzero(np.diff(labels) != 0) + 1
        bounds = np.concatenate(([0], change, [labels.size]))
        expect = sum(max(0, int(b - a) - 20 + 1) for a, b in zip(bounds[:-1], bounds[1:])
                     if labels[a] != AMBIGUOUS)
        assert len(wins) == expect
