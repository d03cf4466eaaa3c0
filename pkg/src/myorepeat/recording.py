"""Recording container, stream synchronization, relabeling and CSV I/O."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MalformedStream, NoOverlap, ParseError

AMBIGUOUS = -1
MAX_LABEL = 17
SLOTS = ("0900", "1200", "1400")


@dataclass(frozen=True)
class RawStream:
    """Irregularly sampled scalar stream straight from an acquisition device."""

    timestamps: np.ndarray
    values: np.ndarray
    stream_id: str = ""

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise MalformedStream(f"stream {self.stream_id!r}: timestamps/values shape mismatch")
        if t.size < 2:
            raise MalformedStream(f"stream {self.stream_id!r}: needs at least 2 points")
        if np.any(np.diff(t) <= 0):
            raise MalformedStream(f"stream {self.stream_id!r}: timestamps not strictly increasing")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Recording:
    """Uniformly sampled multichannel recording with one label per sample.

    Attributes
    ----------
    samples : ndarray, shape (T, C)
        Signal amplitudes, one column per electrode.
    timestamps : ndarray, shape (T,)
        Sample times in seconds.
    labels : ndarray of int, shape (T,)
        Stimulus class per sample, 0 for rest, ``AMBIGUOUS`` for discarded samples.
    sample_rate : float
        Sampling rate in Hz.
    acquisition_id : int
    day, slot : optional metadata stored in the JSON sidecar.
    """

    samples: np.ndarray
    timestamps: np.ndarray
    labels: np.ndarray
    sample_rate: float
    acquisition_id: int = 0
    day: int | None = None
    slot: str | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        t = np.asarray(self.timestamps, dtype=float)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[1] < 1:
            raise ValueError("samples must be a (T, C) matrix with C >= 1")
        if t.shape != (x.shape[0],) or y.shape != (x.shape[0],):
            raise ValueError("timestamps, labels and samples disagree on length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        bad = (y != AMBIGUOUS) & ((y < 0) | (y > MAX_LABEL))
        if np.any(bad):
            raise ValueError(f"label {int(y[bad][0])} outside 0..{MAX_LABEL}")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        for name, arr in (("samples", x), ("timestamps", t), ("labels", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def channel_count(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return self.samples.shape[0]

    def replace(self, **changes) -> "Recording":
        kw = dict(
            samples=self.samples, timestamps=self.timestamps, labels=self.labels,
            sample_rate=self.sample_rate, acquisition_id=self.acquisition_id,
            day=self.day, slot=self.slot, meta=self.meta,
        )
        kw.update(changes)
        return Recording(**kw)


def resample_synchronize(streams, labels_stream, target_rate):
    """Put several raw streams and a label stream on one uniform time grid.

    Signal streams are linearly interpolated. Labels are categorical, so each
    grid point takes the most recent label at or before it.

    Parameters
    ----------
    streams : list of RawStream
        One stream per output channel, in channel order.
    labels_stream : RawStream
        Integer stimulus labels.
    target_rate : float
        Output sampling rate in Hz.

    Returns
    -------
    Recording
    """
    if not target_rate > 0:
        raise ValueError("target_rate must be positive")
    if not streams:
        raise MalformedStream("no signal streams given")
    everything = list(streams) + [labels_stream]
    for s in everything:
        if not isinstance(s, RawStream):
            raise MalformedStream("expected RawStream instances")
    t0 = max(s.timestamps[0] for s in everything)
    t1 = min(s.timestamps[-1] for s in everything)
    if t1 <= t0:
        raise NoOverlap(f"streams share no common span ({t0} >= {t1})")

    n = int(np.floor((t1 - t0) * target_rate + 1e-9)) + 1
    grid = t0 + np.arange(n) / target_rate
    # guard the last knot against round-off past t1
    grid[-1] = min(grid[-1], t1)

    cols = [np.interp(grid, s.timestamps, s.values) for s in streams]
    idx = np.searchsorted(labels_stream.timestamps, grid, side="right") - 1
    labels = np.rint(labels_stream.values[idx]).astype(np.int64)
    return Recording(np.column_stack(cols), grid, labels, float(target_rate))


def label_runs(labels):
    """Run-length encode a label sequence.

    Returns
    -------
    starts, lengths, values : ndarray
    """
    y = np.asarray(labels)
    if y.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    change = np.flatnonzero(y[1:] != y[:-1]) + 1
    starts = np.concatenate(([0], change))
    lengths = np.diff(np.concatenate((starts, [y.size])))
    return starts, lengths, y[starts]


def relabel_center_thirds(labels):
    """Keep only the central third of every run of identical labels.

    Each maximal run of length ``L`` keeps run-local indices
    ``[L // 3, L - L // 3)``; the flanks become ``AMBIGUOUS``. Rest runs are
    treated like any other run.
    """
    y = np.asarray(labels, dtype=np.int64)
    out = np.full_like(y, AMBIGUOUS)
    starts, lengths, values = label_runs(y)
    for s, n, v in zip(starts, lengths, values):
        f = n // 3
        out[s + f:s + n - f] = v
    return out


def _sidecar(path):
    return Path(path).with_suffix(".json")


def save_recording(rec, path, provenance=None):
    """Write ``rec`` as CSV (``t,ch1..chC,label``) plus a JSON sidecar.

    ``provenance`` entries are written as leading ``#`` comment lines.
    """
    path = Path(path)
    buf = io.StringIO()
    for k, v in (provenance or {}).items():
        buf.write(f"# {k}={v}\n")
    header = ",".join(["t"] + [f"ch{i + 1}" for i in range(rec.channel_count)] + ["label"])
    data = np.column_stack([rec.timestamps, rec.samples])
    fmt = ",".join(["%.17g"] * data.shape[1])
    lines = [fmt % tuple(row) for row in data.tolist()]
    buf.write(header + "\n")
    buf.write("\n".join(f"{line},{lab}" for line, lab in zip(lines, rec.labels.tolist())))
    buf.write("\n")
    path.write_text(buf.getvalue())
    meta = {"acquisition": int(rec.acquisition_id), "day": rec.day, "slot": rec.slot}
    _sidecar(path).write_text(json.dumps(meta, indent=2) + "\n")


def _read_sidecar(path):
    side = _sidecar(path)
    if not side.exists():
        return {}
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{side}: {exc.msg}", exc.lineno) from exc
    allowed = {"acquisition", "day", "slot"}
    extra = set(meta) - allowed
    if extra:
        raise ParseError(f"{side}: unknown keys {sorted(extra)}")
    if meta.get("slot") not in (None, *SLOTS):
        raise ParseError(f"{side}: slot must be one of {SLOTS}")
    return meta


def load_recording(path, sample_rate=None):
    """Read a recording written by :func:`save_recording`.

    Parameters
    ----------
    path : str or Path
    sample_rate : float, optional
        Defaults to the inverse of the median timestamp spacing.

    Raises
    ------
    ParseError
        On any schema violation, with the 1-based line number when known.
    """
    path = Path(path)
    text = path.read_text().splitlines()
    line_no = 0
    while line_no < len(text) and text[line_no].startswith("#"):
        line_no += 1
    if line_no >= len(text):
        raise ParseError("missing header", line_no + 1)
    header = text[line_no].strip().split(",")
    n_ch = len(header) - 2
    expected = ["t"] + [f"ch{i + 1}" for i in range(n_ch)] + ["label"]
    if n_ch < 1 or header != expected:
        raise ParseError(f"bad header {text[line_no]!r}", line_no + 1)
    first_data = line_no + 2  # 1-based line of the first row

    rows = text[line_no + 1:]
    try:
        data = np.loadtxt(rows, delimiter=",", ndmin=2) if rows else np.zeros((0, n_ch + 2))
    except ValueError:
        data = None
    if data is None or data.shape[1] != n_ch + 2:
        for i, row in enumerate(rows):
            parts = row.split(",")
            if len(parts) != n_ch + 2:
                raise ParseError(f"expected {n_ch + 2} fields, got {len(parts)}", first_data + i)
            try:
                [float(p) for p in parts]
            except ValueError as exc:
                raise ParseError(str(exc), first_data + i) from None
        raise ParseError("unreadable data")

    t = data[:, 0]
    labels_f = data[:, -1]
    if not np.all(np.isfinite(data)):
        i = int(np.flatnonzero(~np.all(np.isfinite(data), axis=1))[0])
        raise ParseError("non-finite value", first_data + i)
    labels = labels_f.astype(np.int64)
    bad = (labels_f != labels) | ((labels != AMBIGUOUS) & ((labels < 0) | (labels > MAX_LABEL)))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ParseError(f"invalid label {labels_f[i]:g}", first_data + i)
    if t.size > 1:
        dec = np.flatnonzero(np.diff(t) <= 0)
        if dec.size:
            raise ParseError("timestamps not strictly increasing", first_data + int(dec[0]) + 1)

    if sample_rate is None:
        if t.size < 2:
            raise ParseError("cannot infer sample rate from fewer than 2 rows")
        sample_rate = float(np.round(1.0 / np.median(np.diff(t)), 9))
    meta = _read_sidecar(path)
    return Recording(
        data[:, 1:-1], t, labels, sample_rate,
        acquisition_id=int(meta.get("acquisition", 0)),
        day=meta.get("day"), slot=meta.get("slot"),
    )
