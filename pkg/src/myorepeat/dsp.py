"""Low-pass design, zero-phase filtering and window segmentation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidCutoff, NoWindowsWarning, SignalTooShort
from .recording import AMBIGUOUS

FILTER_ORDER = 2
PAD_LEN = 3 * FILTER_ORDER


@dataclass(frozen=True)
class IirCoefficients:
    b: np.ndarray
    a: np.ndarray
    design_cutoff: float
    design_rate: float

    def frequency_response(self, freqs):
        """Complex response at ``freqs`` (Hz) of a single forward pass."""
        z = np.exp(-2j * np.pi * np.asarray(freqs, dtype=float) / self.design_rate)
        num = self.b[0] + self.b[1] * z + self.b[2] * z**2
        den = self.a[0] + self.a[1] * z + self.a[2] * z**2
        return num / den

    def poles(self):
        return np.roots(self.a)


def design_butter2_lowpass(cutoff, rate):
    """Second-order Butterworth low-pass via prewarped bilinear transform.

    Parameters
    ----------
    cutoff : float
        -3 dB frequency in Hz.
    rate : float
        Sampling rate in Hz.

    Returns
    -------
    IirCoefficients
    """
    if not (0 < cutoff < rate / 2):
        raise InvalidCutoff(f"cutoff {cutoff} Hz must lie in (0, {rate / 2}) for rate {rate} Hz")
    k = math.tan(math.pi * cutoff / rate)
    k2 = k * k
    norm = 1.0 + math.sqrt(2.0) * k + k2
    b = np.array([k2, 2.0 * k2, k2]) / norm
    a = np.array([1.0, 2.0 * (k2 - 1.0) / norm, (1.0 - math.sqrt(2.0) * k + k2) / norm])
    return IirCoefficients(b, a, float(cutoff), float(rate))


def _steady_state(coeffs):
    # DF2T state that makes a unit step settle immediately
    b, a = coeffs.b, coeffs.a
    g = b.sum() / a.sum()
    return np.array([b[1] + b[2] - (a[1] + a[2]) * g, b[2] - a[2] * g])


def _forward_backward(coeffs, x):
    n = x.shape[0]
    head = 2 * x[0] - x[PAD_LEN:0:-1]
    tail = 2 * x[-1] - x[-2:-PAD_LEN - 2:-1]
    ext = np.concatenate([head, x, tail], axis=0)

    zi = _steady_state(coeffs)
    zi = zi.reshape((2,) + (1,) * (ext.ndim - 1))
    y, _ = lfilter(coeffs.b, coeffs.a, ext, axis=0, zi=zi * ext[0])
    y = y[::-1]
    y, _ = lfilter(coeffs.b, coeffs.a, y, axis=0, zi=zi * y[0])
    y = y[::-1]
    return y[PAD_LEN:PAD_LEN + n]


def filtfilt(coeffs, signal):
    """Zero-phase forward-backward filtering with odd-reflection edge padding.

    Works along axis 0, so ``signal`` may be a vector or a (T, C) matrix.
    A single forward-backward pass depends on which end it starts from, so
    the result is the mean of the pass over ``signal`` and the time-reversed
    pass over its reverse. This makes the output exactly symmetric under
    time reversal; away from the edges both passes agree.
    """
    x = np.asarray(signal, dtype=float)
    n = x.shape[0]
    if n <= PAD_LEN:
        raise SignalTooShort(f"need more than {PAD_LEN} samples, got {n}")
    y = 0.5 * (_forward_backward(coeffs, x) + _forward_backward(coeffs, x[::-1])[::-1])
    return np.ascontiguousarray(y)


def filter_recording(rec, cutoff=1.0):
    """Zero-phase low-pass every channel of a recording."""
    coeffs = design_butter2_lowpass(cutoff, rec.sample_rate)
    return rec.replace(samples=filtfilt(coeffs, rec.samples))


@dataclass(frozen=True)
class LabeledWindow:
    samples: np.ndarray
    label: int
    start_index: int


def ms_to_samples(ms, rate):
    n = ms * rate / 1000.0
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9:
        raise ValueError(f"{ms} ms at {rate} Hz is not a whole number of samples")
    return k


def window_starts(labels, width, step):
    """Start indices of windows lying entirely inside one non-ambiguous run."""
    y = np.asarray(labels)
    n = y.size
    if width > n:
        return np.zeros(0, dtype=np.int64)
    # run_end[i]: one past the last index of the run containing i
    change = np.flatnonzero(y[1:] != y[:-1]) + 1
    ends = np.concatenate((change, [n]))
    run_id = np.zeros(n, dtype=np.int64)
    run_id[change] = 1
    run_id = np.cumsum(run_id)
    run_end = ends[run_id]
    starts = np.arange(0, n - width + 1, step)
    ok = (run_end[starts] >= starts + width) & (y[starts] != AMBIGUOUS)
    return starts[ok]


def segment_windows(rec, window_ms=200, step_ms=10):
    """Cut a recording into fixed-length, label-homogeneous windows.

    A window is kept only when every sample carries the same non-ambiguous
    label; windows start every ``step_ms``.

    Returns
    -------
    list of LabeledWindow
    """
    width = ms_to_samples(window_ms, rec.sample_rate)
    step = ms_to_samples(step_ms, rec.sample_rate)
    if width > len(rec):
        warnings.warn(f"window of {width} samples exceeds recording length {len(rec)}",
                      NoWindowsWarning, stacklevel=2)
        return []
    starts = window_starts(rec.labels, width, step)
    return [LabeledWindow(rec.samples[s:s + width], int(rec.labels[s]), int(s)) for s in starts]
