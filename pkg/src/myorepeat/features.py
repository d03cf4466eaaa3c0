"""Per-channel window features: waveform length, variance and STFT magnitudes."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyInput, ShapeMismatch, WindowTooShort

KINDS = ("WL", "VAR", "STFT")


def waveform_length(x):
    """Sum of absolute first differences of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        raise WindowTooShort("waveform length needs at least 2 samples")
    return np.abs(np.diff(x, axis=0)).sum(axis=0)


def variance_feature(x):
    """Population variance (divides by the window length)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 1:
        raise WindowTooShort("variance needs at least 1 sample")
    return ((x - x.mean(axis=0)) ** 2).mean(axis=0)


def dft_matrix(block, bins):
    """``exp(-2j*pi*k*m/bins)`` for m < block, k = 0..bins//2."""
    m = np.arange(block)[:, None]
    k = np.arange(bins // 2 + 1)[None, :]
    r = (k * m) % bins  # the phase is periodic; reducing it first avoids large angles
    out = np.exp(-2j * np.pi * r / bins)
    # quarter turns are exactly representable, so zero bins come out exactly zero
    quarter = (4 * r) % bins == 0
    out[quarter] = np.array([1.0, -1j, -1.0, 1j])[(4 * r[quarter]) // bins]
    return out


def stft_magnitudes(x, block=4, bins=None):
    """Mean DFT magnitude of rectangular blocks sliding with hop 1.

    Parameters
    ----------
    x : array_like, shape (W,) or (W, C)
    block : int
        Block (rectangular window) length R.
    bins : int, optional
        Number of DFT bins M, defaults to ``block``. Only bins 0..M//2 are
        returned since the input is real.

    Returns
    -------
    ndarray, shape (M//2 + 1,) or (M//2 + 1, C)
    """
    bins = block if bins is None else bins
    if bins < block:
        raise ValueError("bins must be >= block")
    x = np.asarray(x, dtype=float)
    if x.shape[0] < block:
        raise WindowTooShort(f"window of {x.shape[0]} samples shorter than block {block}")
    blocks = sliding_window_view(x, block, axis=0)  # (n_blocks, [C,] block)
    spec = np.abs(blocks @ dft_matrix(block, bins))
    return spec.mean(axis=0).T if x.ndim == 2 else spec.mean(axis=0)


def features_per_channel(kind, bins=4):
    if kind in ("WL", "VAR"):
        return 1
    if kind == "STFT":
        return bins // 2 + 1
    raise ValueError(f"unknown feature kind {kind!r}")


def batch_features(windows, kind, block=4, bins=None):
    """Vectorized features for a (N, W, C) stack of windows.

    Returns a (N, C * per_channel) matrix with channel blocks in channel order.
    """
    w = np.asarray(windows, dtype=float)
    if w.ndim != 3:
        raise ShapeMismatch("expected a (N, W, C) window stack")
    n, width, c = w.shape
    if kind == "WL":
        if width < 2:
            raise WindowTooShort("waveform length needs at least 2 samples")
        return np.abs(np.diff(w, axis=1)).sum(axis=1)
    if kind == "VAR":
        return w.var(axis=1)
    if kind == "STFT":
        bins = block if bins is None else bins
        if width < block:
            raise WindowTooShort(f"window of {width} samples shorter than block {block}")
        if bins < block:
            raise ValueError("bins must be >= block")
        blocks = sliding_window_view(w, block, axis=1)  # (N, n_blocks, C, block)
        mags = np.abs(blocks @ dft_matrix(block, bins)).mean(axis=1)  # (N, C, K)
        return mags.reshape(n, c * (bins // 2 + 1))
    raise ValueError(f"unknown feature kind {kind!r}")


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows sharing one kind and layout.

    Attributes
    ----------
    values : ndarray, shape (N, D)
    labels : ndarray of int, shape (N,)
    kind : str
    channels : int
    per_channel : int
    starts : ndarray of int, shape (N,), optional
        Start sample of the source window; kept for time ordering and splits.
    """

    values: np.ndarray
    labels: np.ndarray
    kind: str
    channels: int
    per_channel: int
    starts: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        y = np.asarray(self.labels, dtype=np.int64)
        if v.ndim != 2 or v.shape[0] != y.shape[0]:
            raise ShapeMismatch("values must be (N, D) with one label per row")
        if v.shape[1] != self.channels * self.per_channel:
            raise ShapeMismatch(
                f"row length {v.shape[1]} != {self.channels} x {self.per_channel}")
        if np.any((y < 0) | (y > 17)):
            raise ValueError("feature labels must lie in 0..17")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", y)
        if self.starts is not None:
            object.__setattr__(self, "starts", np.asarray(self.starts, dtype=np.int64))

    def __len__(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def class_set(self):
        return tuple(int(c) for c in np.unique(self.labels))

    def take(self, index):
        index = np.asarray(index)
        return FeatureMatrix(
            self.values[index], self.labels[index], self.kind, self.channels,
            self.per_channel, None if self.starts is None else self.starts[index],
        )

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        if not parts:
            raise EmptyInput("nothing to concatenate")
        first = parts[0]
        starts = None
        if all(p.starts is not None for p in parts):
            starts = np.concatenate([p.starts for p in parts])
        return cls(
            np.concatenate([p.values for p in parts]), np.concatenate([p.labels for p in parts]),
            first.kind, first.channels, first.per_channel, starts,
        )

    def to_csv(self, path, provenance=None):
        """Write ``f1..fD,label`` rows (plus ``start`` when known) to ``path``."""
        cols = [f"f{i + 1}" for i in range(self.dim)] + ["label"]
        if self.starts is not None:
            cols.append("start")
        lines = [f"# {k}={v}" for k, v in (provenance or {}).items()]
        lines.append(",".join(cols))
        fmt = ",".join(["%.17g"] * self.dim)
        tails = self.labels.tolist() if self.starts is None else [
            f"{lab},{st}" for lab, st in zip(self.labels.tolist(), self.starts.tolist())]
        for row, tail in zip(self.values.tolist(), tails):
            lines.append(f"{fmt % tuple(row)},{tail}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path, kind, channels):
        lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
        header = lines[0].split(",")
        has_start = header[-1] == "start"
        dim = len(header) - 1 - int(has_start)
        data = (np.loadtxt(lines[1:], delimiter=",", ndmin=2) if len(lines) > 1
                else np.zeros((0, len(header))))
        if dim % channels:
            raise ShapeMismatch(f"{dim} features not divisible by {channels} channels")
        return cls(data[:, :dim], data[:, dim].astype(np.int64), kind, channels, dim // channels,
                   data[:, dim + 1].astype(np.int64) if has_start else None)


def extract_features(windows, kind, block=4, bins=None):
    """Compute one feature row per window, channel by channel.

    Parameters
    ----------
    windows : list of LabeledWindow
    kind : {"WL", "VAR", "STFT"}

    Returns
    -------
    FeatureMatrix
    """
    if kind not in KINDS:
        raise ValueError(f"unknown feature kind {kind!r}")
    if len(windows) == 0:
        raise EmptyInput("no windows to extract features from")
    shape = windows[0].samples.shape
    if any(w.samples.shape != shape for w in windows):
        raise ShapeMismatch("windows differ in shape")
    stack = np.stack([w.samples for w in windows])
    if stack.ndim == 2:
        stack = stack[:, :, None]
    bins = block if bins is None else bins
    values = batch_features(stack, kind, block=block, bins=bins)
    return FeatureMatrix(
        values, np.array([w.label for w in windows]), kind, stack.shape[2],
        features_per_channel(kind, bins), np.array([w.start_index for w in windows]),
    )
