"""Majority-vote smoothing of predicted label sequences and accuracy metrics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptySequence, InvalidWindow, ShapeMismatch, UnknownLabel

DEFAULT_SMOOTHING_CANDIDATES = tuple(range(1, 26, 2))


@dataclass(frozen=True)
class PredictionSequence:
    """Predicted and true labels of consecutive test windows, in time order."""

    predicted: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.predicted, dtype=np.int64).ravel()
        t = np.asarray(self.truth, dtype=np.int64).ravel()
        if p.shape != t.shape:
            raise ShapeMismatch(f"predicted has {p.size} labels, truth {t.size}")
        object.__setattr__(self, "predicted", p)
        object.__setattr__(self, "truth", t)

    def __len__(self):
        return self.predicted.size

    def with_predicted(self, predicted):
        return PredictionSequence(predicted, self.truth)


def _check_window(window_len):
    if int(window_len) != window_len or window_len < 1 or window_len % 2 == 0:
        raise InvalidWindow(f"window length must be a positive odd integer, got {window_len}")
    return int(window_len)


def _encode(labels):
    uniq, codes = np.unique(labels, return_inverse=True)
    return uniq, codes.ravel()


def smooth_majority(predicted, window_len):
    """Centred sliding mode filter.

    ``output[t]`` is the most frequent label among
    ``predicted[t-w .. t+w]`` with ``w = (window_len - 1) // 2``; windows are
    truncated at the sequence edges. On a frequency tie ``predicted[t]`` is
    kept when it is among the most frequent labels, otherwise the smallest
    tied label wins.

    Parameters
    ----------
    predicted : array_like of int
    window_len : int
        Odd window length; 1 returns the input unchanged.

    Returns
    -------
    ndarray of int
    """
    window_len = _check_window(window_len)
    labels = np.asarray(predicted, dtype=np.int64).ravel()
    if window_len == 1 or labels.size == 0:
        return labels.copy()
    w = window_len // 2
    uniq, codes = _encode(labels)
    n, k = labels.size, uniq.size
    # running per-label counts: counts[t] = occurrences in labels[:t]
    onehot = np.zeros((n + 1, k), dtype=np.int32)
    onehot[np.arange(1, n + 1), codes] = 1
    cum = np.cumsum(onehot, axis=0)
    t = np.arange(n)
    lo = np.maximum(t - w, 0)
    hi = np.minimum(t + w + 1, n)
    counts = cum[hi] - cum[lo]
    best = counts.max(axis=1)
    keep = counts[t, codes] == best
    out = np.where(keep, codes, counts.argmax(axis=1))
    return uniq[out]


def smooth_tumbling(predicted, window_len):
    """Replace each consecutive block of ``window_len`` labels by its mode.

    Ties go to the smallest label; the last block may be shorter.
    """
    window_len = _check_window(window_len)
    labels = np.asarray(predicted, dtype=np.int64).ravel()
    out = labels.copy()
    for start in range(0, labels.size, window_len):
        block = labels[start:start + window_len]
        vals, cnt = np.unique(block, return_counts=True)
        out[start:start + window_len] = vals[np.argmax(cnt)]
    return out


SMOOTHERS = {"sliding": smooth_majority, "tumbling": smooth_tumbling}


def accuracy(seq):
    """Fraction of windows whose predicted label equals the truth."""
    if len(seq) == 0:
        raise EmptySequence("accuracy of an empty sequence")
    return float(np.mean(seq.predicted == seq.truth))


def movement_accuracy(seq, rest_label=0):
    """Accuracy restricted to windows whose true label is a movement."""
    mask = seq.truth != rest_label
    if not mask.any():
        raise EmptySequence("no movement windows in sequence")
    return float(np.mean(seq.predicted[mask] == seq.truth[mask]))


def select_smoothing_window(seq, candidates=DEFAULT_SMOOTHING_CANDIDATES, mode="sliding"):
    """Pick the window length whose smoothing maximizes accuracy on ``seq``.

    Returns
    -------
    (best_len, gain)
        ``gain`` is smoothed minus raw accuracy; ties go to the shortest
        window, so with 1 among the candidates the gain is never negative.
    """
    smoother = SMOOTHERS[mode]
    raw = accuracy(seq)
    best_len, best_acc = None, -1.0
    for w in sorted(_check_window(c) for c in candidates):
        acc = raw if w == 1 else accuracy(seq.with_predicted(smoother(seq.predicted, w)))
        if acc > best_acc:
            best_len, best_acc = w, acc
    return best_len, best_acc - raw


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts of (true class, predicted class); rows are true classes."""

    counts: np.ndarray
    class_set: tuple

    @property
    def total(self):
        return int(self.counts.sum())

    def normalized(self):
        """Row-normalized matrix; rows of absent classes are all zero."""
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def per_class_accuracy(self):
        rows = self.counts.sum(axis=1)
        diag = np.diag(self.counts).astype(float)
        return np.divide(diag, rows, out=np.full(rows.shape, np.nan), where=rows > 0)

    def to_csv(self, path, normalized=False, provenance=None):
        m = self.normalized() if normalized else self.counts
        lines = [f"# {k}={v}" for k, v in (provenance or {}).items()]
        lines.append("true\\pred," + ",".join(str(c) for c in self.class_set))
        fmt = (lambda v: f"{v:.6f}") if normalized else (lambda v: str(int(v)))
        for c, row in zip(self.class_set, m):
            lines.append(f"{c}," + ",".join(fmt(v) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")


def confusion(seq, class_set):
    """Confusion matrix of ``seq`` over ``class_set``.

    Raises
    ------
    UnknownLabel
        If a predicted or true label is not in ``class_set``.
    """
    class_set = tuple(int(c) for c in class_set)
    index = np.asarray(class_set)
    for name, labels in (("truth", seq.truth), ("predicted", seq.predicted)):
        bad = ~np.isin(labels, index)
        if bad.any():
            raise UnknownLabel(f"{name} label {int(labels[bad][0])} not in class set")
    order = np.argsort(index)
    ti = order[np.searchsorted(index[order], seq.truth)]
    pi = order[np.searchsorted(index[order], seq.predicted)]
    k = len(class_set)
    counts = np.bincount(ti * k + pi, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts, class_set)


def per_class_accuracy(seq, class_set):
    """Per-class recall, counted directly; NaN for classes absent from the truth."""
    out = []
    for c in class_set:
        mask = seq.truth == c
        out.append(float(np.mean(seq.predicted[mask] == c)) if mask.any() else np.nan)
    return np.array(out)
