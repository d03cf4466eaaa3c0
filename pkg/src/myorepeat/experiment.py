"""Multi-day repeatability protocol: schedule, splits, validation sets, reports, trends.

One acquisition is used for training; the classifier is then tested on the
same-slot acquisitions of the following days. Repetitions 1-5 of every
movement train, 6-10 test, and the first test repetition is held out for
hyperparameter validation.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dsp import filter_recording, segment_windows
from .errors import (InsufficientDays, MissingAcquisition, RepetitionCountMismatch,
                     RepetitionCountWarning)
from .evaluation import (DEFAULT_SMOOTHING_CANDIDATES, SMOOTHERS, PredictionSequence, accuracy,
                         confusion, movement_accuracy, select_smoothing_window)
from .features import FeatureMatrix, extract_features
from .recording import AMBIGUOUS, SLOTS, label_runs, relabel_center_thirds

REPETITIONS = 10
TRAIN_REPETITIONS = 5
SUBSAMPLE_STRIDE = 10
PLATEAU_THRESHOLD = 3.0
CONFIGURATIONS = ("I", "II")


# ---------------------------------------------------------------------------
# schedule and plans


@dataclass(frozen=True)
class AcquisitionSchedule:
    """Map from (day, slot) to acquisition id."""

    entries: tuple  # ((day, slot), acquisition id) pairs, sorted by day then slot

    def __post_init__(self):
        items = sorted(((int(d), str(s)), int(a)) for (d, s), a in dict(self.entries).items())
        if len(items) != len(dict(self.entries)) or len(items) != len(self.entries):
            raise ValueError("duplicate (day, slot) in schedule")
        ids = [a for _, a in items]
        if len(set(ids)) != len(ids):
            raise ValueError("acquisition ids must be unique")
        for (d, s), _ in items:
            if d < 1 or s not in SLOTS:
                raise ValueError(f"invalid schedule key ({d}, {s})")
        object.__setattr__(self, "entries", tuple(items))

    @classmethod
    def from_mapping(cls, mapping):
        return cls(tuple(mapping.items()))

    @classmethod
    def default(cls):
        """Four days, three daily slots; ids 1 and 4 are absent."""
        ids = iter((2, 3, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14))
        return cls(tuple(((day, slot), next(ids)) for day in range(1, 5) for slot in SLOTS))

    def items(self):
        return list(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def ids(self):
        return [a for _, a in self.entries]

    @property
    def days(self):
        return sorted({d for (d, _), _ in self.entries})

    def acquisition(self, day, slot):
        for (d, s), a in self.entries:
            if d == day and s == slot:
                return a
        raise MissingAcquisition(f"no acquisition on day {day} at {slot}")

    def key_of(self, acq):
        for key, a in self.entries:
            if a == acq:
                return key
        raise MissingAcquisition(f"acquisition {acq} is not in the schedule")

    def day_of(self, acq):
        return self.key_of(acq)[0]


@dataclass(frozen=True)
class ExperimentPlan:
    """Training acquisition, its four test acquisitions and the validation configuration.

    ``testing_acqs[0]`` is the training acquisition itself (same-day test).
    Configuration ``"I"`` validates on the first test repetition of every
    test acquisition, ``"II"`` on the training acquisition's only.
    """

    experiment_id: int
    training_acq: int
    testing_acqs: tuple
    config: str
    kinds: tuple = ("WL", "STFT")

    def __post_init__(self):
        object.__setattr__(self, "testing_acqs", tuple(int(a) for a in self.testing_acqs))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if self.config not in CONFIGURATIONS:
            raise ValueError(f"config must be one of {CONFIGURATIONS}")
        if not self.testing_acqs or self.testing_acqs[0] != self.training_acq:
            raise ValueError("the first test acquisition must be the training acquisition")

    @property
    def part(self):
        return CONFIGURATIONS.index(self.config) + 1

    @property
    def validation_acqs(self):
        return self.testing_acqs if self.config == "I" else (self.training_acq,)


def default_plans(schedule=None, kinds=("WL", "STFT")):
    """Experiments 1-3 (configuration I) and 4-6 (configuration II).

    Experiment ``k`` and ``k + 3`` train on the day-1 acquisition of slot
    ``k`` and test on that slot across all days.
    """
    schedule = schedule or AcquisitionSchedule.default()
    plans = []
    for part, config in enumerate(CONFIGURATIONS):
        for k, slot in enumerate(SLOTS):
            tests = tuple(schedule.acquisition(day, slot) for day in schedule.days)
            plans.append(ExperimentPlan(part * len(SLOTS) + k + 1, tests[0], tests, config, kinds))
    return plans


# ---------------------------------------------------------------------------
# preprocessing and repetitions


def preprocess(rec, cutoff=1.0):
    """Low-pass filter every channel and keep only the centre third of each stimulus run."""
    return filter_recording(rec, cutoff).replace(labels=relabel_center_thirds(rec.labels))


def repetition_numbers(labels):
    """1-based repetition number of every sample; 0 for ambiguous samples.

    A repetition is one (kept) run of a movement label. A rest run takes the
    number of the movement run that follows it, or of the one before it when
    no movement follows.

    Returns
    -------
    reps : ndarray of int
    owner : ndarray of int
        Movement class whose repetition each sample belongs to (0 if none).
    counts : dict
        Movement class -> number of repetitions.
    """
    labels = np.asarray(labels)
    reps = np.zeros(labels.size, dtype=np.int64)
    owner = np.zeros(labels.size, dtype=np.int64)
    counts = {}
    pending = []
    last = (0, 0)
    for start, length, value in zip(*label_runs(labels)):
        value = int(value)
        if value == AMBIGUOUS:
            continue
        if value == 0:
            pending.append((start, length))
            continue
        counts[value] = counts.get(value, 0) + 1
        last = (counts[value], value)
        for s, n in pending + [(start, length)]:
            reps[s:s + n], owner[s:s + n] = last
        pending = []
    for s, n in pending:
        reps[s:s + n], owner[s:s + n] = last
    return reps, owner, counts


# partition codes of RepetitionSplit.parts
UNUSED, TRAIN, FIRST_TEST, TEST = 0, 1, 2, 3


@dataclass(frozen=True)
class RepetitionSplit:
    """Train/test partition of every sample of one recording.

    ``parts`` holds ``TRAIN``, ``FIRST_TEST`` (the first test repetition,
    candidate validation data), ``TEST`` or ``UNUSED`` per sample.
    """

    repetitions: np.ndarray
    parts: np.ndarray
    n_train: dict  # movement class -> repetitions used for training
    counts: dict  # movement class -> total repetitions


def split_by_repetition(rec, n_reps=REPETITIONS, n_train=TRAIN_REPETITIONS):
    """Split a preprocessed recording by repetition: 1..5 train, 6..10 test.

    Rest samples follow the repetition they are attached to (see
    ``repetition_numbers``). Classes with a repetition count other than
    ``n_reps`` trigger a ``RepetitionCountWarning`` and fall back to
    training on the first ``count // 2`` repetitions.

    Raises
    ------
    RepetitionCountMismatch
        If the recording has no movement repetitions at all.
    """
    reps, owner, counts = repetition_numbers(rec.labels)
    if not counts:
        raise RepetitionCountMismatch("recording contains no movement repetitions")
    n_train_by_class = {}
    for c, k in sorted(counts.items()):
        if k == n_reps:
            n_train_by_class[c] = n_train
        else:
            warnings.warn(f"class {c} has {k} repetitions instead of {n_reps}; "
                          f"training on the first {k // 2}", RepetitionCountWarning, stacklevel=2)
            n_train_by_class[c] = k // 2
    limit = np.zeros(18, dtype=np.int64)
    for c, k in n_train_by_class.items():
        limit[c] = k
    lim = limit[owner]
    parts = np.full(reps.size, TEST, dtype=np.int8)
    parts[reps <= lim] = TRAIN
    parts[reps == lim + 1] = FIRST_TEST
    parts[reps == 0] = UNUSED
    return RepetitionSplit(reps, parts, n_train_by_class, dict(sorted(counts.items())))


def subsample_training(features, stride=SUBSAMPLE_STRIDE):
    """Keep every ``stride``-th window of each class, in time order.

    Returns the row indices kept when given an int array of labels, or a
    sub-``FeatureMatrix`` when given a ``FeatureMatrix``.
    """
    labels = features.labels if isinstance(features, FeatureMatrix) else np.asarray(features)
    if isinstance(features, FeatureMatrix) and features.starts is not None:
        order = np.argsort(features.starts, kind="stable")
    else:
        order = np.arange(labels.size)
    keep = []
    for c in np.unique(labels):
        rows = order[labels[order] == c]
        keep.append(rows[::stride])
    keep = np.sort(np.concatenate(keep)) if keep else np.zeros(0, dtype=np.int64)
    return features.take(keep) if isinstance(features, FeatureMatrix) else keep


# ---------------------------------------------------------------------------
# per-acquisition datasets


@dataclass(frozen=True)
class AcquisitionData:
    """Feature matrix of one acquisition with the split partition of every window."""

    acquisition: int
    features: FeatureMatrix
    parts: np.ndarray

    def _take(self, *codes):
        return self.features.take(np.flatnonzero(np.isin(self.parts, codes)))

    def train(self):
        return self._take(TRAIN)

    def test(self):
        return self._take(FIRST_TEST, TEST)

    def validation_part(self):
        return self._take(FIRST_TEST)

    def test_without_validation(self):
        return self._take(TEST)


def acquisition_data(rec, kind, window_ms=200, step_ms=10, stft_block=4, stft_bins=None,
                     features=None):
    """Windows, features and split partition of a preprocessed recording.

    Pass precomputed ``features`` (with window starts) to skip extraction.
    """
    split = split_by_repetition(rec)
    if features is None:
        windows = segment_windows(rec, window_ms, step_ms)
        features = extract_features(windows, kind, block=stft_block, bins=stft_bins)
    return AcquisitionData(rec.acquisition_id, features, split.parts[features.starts])


@dataclass(frozen=True)
class ExperimentData:
    """Training, validation and test sets of one experiment and feature kind."""

    train: FeatureMatrix
    validation: FeatureMatrix
    tests: dict  # acquisition id -> FeatureMatrix


def build_validation(plan, data):
    """Validation set and remaining test sets of ``plan``.

    Parameters
    ----------
    plan : ExperimentPlan
    data : mapping of acquisition id -> AcquisitionData

    Returns
    -------
    (validation, tests)
        ``validation`` gathers the first test repetition of every class from
        the acquisitions the configuration draws on; those windows are
        removed from the corresponding test sets, the others are untouched.

    Raises
    ------
    MissingAcquisition
    """
    for acq in (plan.training_acq,) + plan.testing_acqs:
        if acq not in data:
            raise MissingAcquisition(f"experiment {plan.experiment_id} needs acquisition {acq}")
    val_acqs = set(plan.validation_acqs)
    validation = FeatureMatrix.concat([data[a].validation_part() for a in plan.validation_acqs])
    tests = {a: data[a].test_without_validation() if a in val_acqs else data[a].test()
             for a in plan.testing_acqs}
    return validation, tests


def experiment_data(plan, data, stride=SUBSAMPLE_STRIDE):
    validation, tests = build_validation(plan, data)
    train = subsample_training(data[plan.training_acq].train(), stride)
    return ExperimentData(train, validation, tests)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-score fitted on a training set."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, features):
        mean = features.values.mean(axis=0)
        scale = features.values.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, features):
        return FeatureMatrix((features.values - self.mean) / self.scale, features.labels,
                             features.kind, features.channels, features.per_channel,
                             features.starts)


# ---------------------------------------------------------------------------
# evaluation and reporting


@dataclass
class CellResult:
    """Accuracies of one (experiment, feature kind, test acquisition) combination."""

    experiment: int
    kind: str
    test_acq: int
    day: int
    raw: float
    smoothed: float
    window: int
    movement_raw: float
    movement_smoothed: float
    C: float
    gamma: float
    n_windows: int
    confusion: object = field(default=None, repr=False)


def evaluate_sequence(predicted, truth, candidates=DEFAULT_SMOOTHING_CANDIDATES, mode="sliding"):
    """Raw and best-smoothed accuracies of one time-ordered prediction sequence."""
    seq = PredictionSequence(predicted, truth)
    window, _ = select_smoothing_window(seq, candidates, mode)
    smoothed = seq.with_predicted(SMOOTHERS[mode](seq.predicted, window))
    return {
        "raw": accuracy(seq),
        "smoothed": accuracy(smoothed),
        "window": int(window),
        "movement_raw": movement_accuracy(seq),
        "movement_smoothed": movement_accuracy(smoothed),
        "sequence": seq,
    }


def evaluate_model(model, tests, schedule, experiment, kind, candidates=DEFAULT_SMOOTHING_CANDIDATES,
                   mode="sliding", class_set=tuple(range(18))):
    """Predict every test set in time order and score raw and smoothed accuracy."""
    cells = []
    for acq, fm in tests.items():
        order = np.argsort(fm.starts, kind="stable")
        fm = fm.take(order)
        res = evaluate_sequence(model.predict(fm.values), fm.labels, candidates, mode)
        cm = confusion(res["sequence"], class_set)
        binary = model.binaries[0]
        cells.append(CellResult(experiment, kind, int(acq), schedule.day_of(acq), res["raw"],
                                res["smoothed"], res["window"], res["movement_raw"],
                                res["movement_smoothed"], binary.C, binary.gamma, len(fm), cm))
    return cells


REPORT_COLUMNS = ("part", "experiment", "train", "validation", "test", "day",
                  "WL_nS", "WL_S", "STFT_nS", "STFT_S")


@dataclass
class ReportTable:
    """Accuracy cells of all experiments in the train/validation/test layout."""

    plans: list
    cells: list = field(default_factory=list)

    def cell(self, experiment, kind, test_acq):
        for c in self.cells:
            if (c.experiment, c.kind, c.test_acq) == (experiment, kind, test_acq):
                return c
        raise KeyError((experiment, kind, test_acq))

    @property
    def kinds(self):
        seen = []
        for p in self.plans:
            for k in p.kinds:
                if k not in seen:
                    seen.append(k)
        return seen

    def accuracy_cells(self):
        """Every (experiment, test acquisition, kind, smoothed) accuracy, as percent."""
        out = {}
        for c in self.cells:
            out[(c.experiment, c.test_acq, c.kind, False)] = 100.0 * c.raw
            out[(c.experiment, c.test_acq, c.kind, True)] = 100.0 * c.smoothed
        return out

    def series(self, experiment, kind, smoothed=False, movements_only=False):
        """Accuracy (percent) per test day for one experiment, in day order."""
        plan = next(p for p in self.plans if p.experiment_id == experiment)
        attr = ("movement_" if movements_only else "") + ("smoothed" if smoothed else "raw")
        return [100.0 * getattr(self.cell(experiment, kind, a), attr) for a in plan.testing_acqs]

    def mean_series(self, kind, smoothed=False, movements_only=False):
        rows = [self.series(p.experiment_id, kind, smoothed, movements_only) for p in self.plans]
        return list(np.mean(rows, axis=0))

    def _rows(self, movements_only):
        attr_raw = "movement_raw" if movements_only else "raw"
        attr_s = "movement_smoothed" if movements_only else "smoothed"
        for p in self.plans:
            val = "+".join(str(a) for a in p.validation_acqs)
            for a in p.testing_acqs:
                row = {"part": p.part, "experiment": p.experiment_id, "train": p.training_acq,
                       "validation": val, "test": a,
                       "day": next(c.day for c in self.cells if c.test_acq == a)}
                for kind in ("WL", "STFT"):
                    try:
                        c = self.cell(p.experiment_id, kind, a)
                    except KeyError:
                        row[f"{kind}_nS"] = row[f"{kind}_S"] = ""
                        continue
                    row[f"{kind}_nS"] = f"{100.0 * getattr(c, attr_raw):.2f}"
                    row[f"{kind}_S"] = f"{100.0 * getattr(c, attr_s):.2f}"
                yield row

    def to_csv(self, provenance=None, movements_only=False):
        """CSV text: one row per (experiment, test acquisition), accuracies in percent."""
        buf = io.StringIO()
        for k, v in (provenance or {}).items():
            buf.write(f"# {k}={v}\n")
        writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self._rows(movements_only):
            writer.writerow(row)
        return buf.getvalue()

    def to_dict(self):
        return {
            "cells": [
                {"experiment": c.experiment, "kind": c.kind, "test": c.test_acq, "day": c.day,
                 "accuracy": c.raw, "accuracy_smoothed": c.smoothed, "smoothing_window": c.window,
                 "movement_accuracy": c.movement_raw,
                 "movement_accuracy_smoothed": c.movement_smoothed,
                 "C": c.C, "gamma": c.gamma, "test_windows": c.n_windows}
                for c in self.cells
            ],
        }


# ---------------------------------------------------------------------------
# trends


@dataclass(frozen=True)
class TrendSummary:
    """Day-over-day behaviour of one accuracy series (in percent points).

    ``plateau`` holds when the last two day-to-day changes are both smaller
    than the threshold in magnitude; ``slope_later`` is the least-squares
    slope over days 2 onward and ``slope`` the one over all days.
    """

    series: tuple
    deltas: tuple
    plateau: bool
    slope: float
    slope_later: float
    largest_drop: int  # index of the transition with the most negative delta
    first_drop: float  # day-1 accuracy minus mean of later days

    def to_dict(self):
        return {"series": list(self.series), "deltas": list(self.deltas),
                "plateau": self.plateau, "slope": self.slope, "slope_later": self.slope_later,
                "largest_drop": self.largest_drop, "first_drop": self.first_drop}


def _slope(values):
    if len(values) < 2:
        return 0.0
    x = np.arange(len(values), dtype=float)
    return float(np.polyfit(x, np.asarray(values, dtype=float), 1)[0])


def trend_from_series(series, threshold=PLATEAU_THRESHOLD):
    """Summarize a per-day accuracy series given in percent points.

    Raises
    ------
    InsufficientDays
        With fewer than two days.
    """
    s = [float(v) for v in series]
    if len(s) < 2:
        raise InsufficientDays("trend analysis needs at least 2 test days")
    deltas = np.diff(s)
    tail = deltas[-2:]
    return TrendSummary(
        tuple(s), tuple(float(d) for d in deltas), bool(np.all(np.abs(tail) < threshold)),
        _slope(s), _slope(s[1:]), int(np.argmin(deltas)), float(s[0] - np.mean(s[1:])),
    )


def trend_analysis(report, threshold=PLATEAU_THRESHOLD):
    """Trend summaries for every experiment and the experiment mean.

    Returns
    -------
    dict
        ``(experiment id or "mean", kind, smoothed) -> TrendSummary``.
    """
    out = {}
    for kind in report.kinds:
        for smoothed in (False, True):
            for p in report.plans:
                if kind in p.kinds:
                    out[(p.experiment_id, kind, smoothed)] = trend_from_series(
                        report.series(p.experiment_id, kind, smoothed), threshold)
            out[("mean", kind, smoothed)] = trend_from_series(
                report.mean_series(kind, smoothed), threshold)
    return out
