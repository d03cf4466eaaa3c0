"""Schedule, repetition split, validation configurations, report and trends."""

import numpy as np
import pytest

from myorepeat.errors import InsufficientDays, MissingAcquisition, RepetitionCountMismatch
from myorepeat.errors import RepetitionCountWarning
from myorepeat.experiment import (
    FIRST_TEST, TEST, TRAIN, UNUSED, AcquisitionData, AcquisitionSchedule, CellResult,
    ExperimentPlan, ReportTable, Standardizer, acquisition_data, build_validation,
    default_plans, experiment_data, preprocess, split_by_repetition, subsample_training,
    trend_analysis, trend_from_series,
)
from myorepeat.features import FeatureMatrix
from myorepeat.recording import AMBIGUOUS, Recording, relabel_center_thirds
from myorepeat.synth import DriftModel, default_muap_model, generate_acquisition


def _timeline(reps_per_class=None, rest=9, move=9):
    """Rest/move label sequence; ``reps_per_class`` maps class -> repetition count."""
    reps_per_class = reps_per_class or {c: 10 for c in range(1, 18)}
    out = []
    for c, k in reps_per_class.items():
        for _ in range(k):
            out += [0] * rest + [c] * move
    return np.array(out)


def _rec(labels, acq=2):
    n = labels.size
    return Recording(np.zeros((n, 2)), np.arange(n) / 100.0, labels, 100.0, acquisition_id=acq)


@pytest.fixture(scope="module")
def acquisition():
    model = default_muap_model(seed=0)
    rec = generate_acquisition(model, DriftModel(), 1, "0900", seed=7, acquisition_id=2)
    return preprocess(rec)


class TestSchedule:
    def test_default(self):
        s = AcquisitionSchedule.default()
        assert len(s) == 12
        assert s.ids == [2, 3, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14]
        assert 1 not in s.ids and 4 not in s.ids
        assert s.acquisition(2, "1200") == 7 and s.day_of(14) == 4

    def test_missing(self):
        s = AcquisitionSchedule.default()
        with pytest.raises(MissingAcquisition):
            s.acquisition(5, "0900")
        with pytest.raises(MissingAcquisition):
            s.day_of(1)

    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            AcquisitionSchedule.from_mapping({(1, "0900"): 3, (1, "1200"): 3})

    def test_default_plans(self):
        plans = default_plans()
        assert [p.experiment_id for p in plans] == [1, 2, 3, 4, 5, 6]
        assert [p.config for p in plans] == ["I"] * 3 + ["II"] * 3
        assert plans[0].testing_acqs == (2, 6, 9, 12)
        for k in range(3):
            a, b = plans[k], plans[k + 3]
            assert (a.training_acq, a.testing_acqs) == (b.training_acq, b.testing_acqs)
        assert plans[0].validation_acqs == (2, 6, 9, 12)
        assert plans[3].validation_acqs == (2,)

    def test_plan_requires_training_first(self):
        with pytest.raises(ValueError):
            ExperimentPlan(1, 2, (6, 2, 9, 12), "I")


class TestSplit:
    def test_ten_repetitions(self):
        rec = _rec(_timeline())
        split = split_by_repetition(rec)
        assert all(split.n_train[c] == 5 and split.counts[c] == 10 for c in range(1, 18))
        for c in range(1, 18):
            move = rec.labels == c
            assert set(np.unique(split.repetitions[move & (split.parts == TRAIN)])) == {1, 2, 3, 4, 5}
            assert set(np.unique(split.repetitions[move & (split.parts == FIRST_TEST)])) == {6}
            assert set(np.unique(split.repetitions[move & (split.parts == TEST)])) == {7, 8, 9, 10}

    def test_rest_follows_next_movement(self):
        labels = _timeline()
        split = split_by_repetition(_rec(labels))
        # the rest run before class 1 repetition 6 (index 5 of 170 rest/move periods)
        assert np.all(split.parts[5 * 18:5 * 18 + 9] == FIRST_TEST)
        assert np.all(split.parts[:9] == TRAIN)

    def test_fallback_proportional(self):
        counts = {c: 10 for c in range(1, 18)}
        counts[4] = 8
        with pytest.warns(RepetitionCountWarning):
            split = split_by_repetition(_rec(_timeline(counts)))
        assert split.n_train[4] == 4
        labels = _timeline(counts)
        reps = split.repetitions[labels == 4]
        parts = split.parts[labels == 4]
        assert set(reps[parts == TRAIN]) == {1, 2, 3, 4}
        assert set(reps[parts != TRAIN]) == {5, 6, 7, 8}

    def test_empty(self):
        with pytest.raises(RepetitionCountMismatch):
            split_by_repetition(_rec(np.zeros(0, dtype=int)))

    def test_ambiguous_unused(self):
        labels = relabel_center_thirds(_timeline())
        assert np.any(labels == AMBIGUOUS)
        split = split_by_repetition(_rec(labels))
        assert np.all(split.parts[labels == AMBIGUOUS] == UNUSED)

    def test_synthetic_acquisition(self, acquisition):
        split = split_by_repetition(acquisition)
        assert split.counts == {c: 10 for c in range(1, 18)}


class TestSubsample:
    def test_counts(self):
        assert subsample_training(np.full(100, 3)).tolist() == list(range(0, 100, 10))
        assert subsample_training(np.full(9, 3)).tolist() == [0]
        assert subsample_training(np.zeros(0, dtype=int)).size == 0

    def test_per_class_time_order(self):
        labels = np.array([1, 2] * 15)
        fm = FeatureMatrix(np.arange(30.0)[:, None], labels, "WL", 1, 1,
                           starts=np.arange(30)[::-1])
        kept = subsample_training(fm, 10)
        # time order is by start, so each class starts from its latest row index
        assert sorted(kept.starts.tolist()) == [0, 1, 20, 21]


@pytest.fixture(scope="module")
def data(acquisition):
    # the same acquisition stands in for all four days
    fm = acquisition_data(acquisition, "WL")
    return {a: AcquisitionData(a, fm.features, fm.parts) for a in (2, 6, 9, 12)}


class TestValidation:

    def test_config_two(self, data):
        plan = ExperimentPlan(4, 2, (2, 6, 9, 12), "II")
        val, tests = build_validation(plan, data)
        assert len(val) == len(data[2].validation_part())
        for a in (6, 9, 12):
            assert len(tests[a]) == len(data[a].test())
        assert len(tests[2]) == len(data[2].test()) - len(val)

    def test_config_one(self, data):
        plan = ExperimentPlan(1, 2, (2, 6, 9, 12), "I")
        val, tests = build_validation(plan, data)
        assert len(val) == 4 * len(data[2].validation_part())
        for a in (2, 6, 9, 12):
            assert len(tests[a]) == len(data[a].test_without_validation())

    def test_four_test_repetitions_left(self, acquisition, data):
        split = split_by_repetition(acquisition)
        plan = ExperimentPlan(1, 2, (2, 6, 9, 12), "I")
        _, tests = build_validation(plan, data)
        reps = split.repetitions[tests[2].starts]
        labels = tests[2].labels
        for c in range(1, 18):
            assert np.unique(reps[labels == c]).size == 4

    def test_disjoint_sets(self, data):
        plan = ExperimentPlan(1, 2, (2, 6, 9, 12), "I")
        ed = experiment_data(plan, data)
        train = set(data[2].train().starts.tolist())
        assert train.isdisjoint(ed.tests[2].starts.tolist())
        assert set(ed.validation.starts.tolist()).isdisjoint(ed.tests[2].starts.tolist())
        assert set(ed.train.starts.tolist()) <= train

    def test_missing(self, data):
        plan = ExperimentPlan(1, 2, (2, 6, 9, 13), "I")
        with pytest.raises(MissingAcquisition):
            build_validation(plan, data)

    def test_standardizer(self, data):
        fm = data[2].train()
        z = Standardizer.fit(fm).apply(fm)
        np.testing.assert_allclose(z.values.mean(axis=0), 0, atol=1e-9)
        np.testing.assert_allclose(z.values.std(axis=0), 1, atol=1e-9)


def _report():
    plans = default_plans()
    schedule = AcquisitionSchedule.default()
    cells = []
    for p in plans:
        for kind in p.kinds:
            for day, a in enumerate(p.testing_acqs, 1):
                acc = 0.9 - 0.1 * (day > 1) - 0.01 * p.experiment_id
                cells.append(CellResult(p.experiment_id, kind, a, schedule.day_of(a), acc,
                                        acc + 0.01, 3, acc, acc + 0.01, 4.0, 0.25, 100))
    return ReportTable(plans, cells)


class TestReport:
    def test_cell_count(self):
        assert len(_report().accuracy_cells()) == 96

    def test_csv_layout(self):
        lines = _report().to_csv({"config_hash": "x", "seed": 3}).splitlines()
        assert lines[2] == "part,experiment,train,validation,test,day,WL_nS,WL_S,STFT_nS,STFT_S"
        assert lines[3] == "1,1,2,2+6+9+12,2,1,89.00,90.00,89.00,90.00"
        assert lines[-1].startswith("2,6,5,5,14,4,")
        assert len(lines) == 3 + 24

    def test_trends(self):
        trends = trend_analysis(_report())
        t = trends[("mean", "WL", False)]
        assert t.plateau and t.first_drop == pytest.approx(10.0)
        assert len(trends) == 2 * 2 * 7


class TestTrend:
    def test_paper_series(self):
        t = trend_from_series([88, 73, 77, 71])
        assert t.slope < 0 and t.largest_drop == 0
        assert t.deltas == (-15.0, 4.0, -6.0) and not t.plateau

    def test_constant(self):
        t = trend_from_series([80, 80, 80, 80])
        assert t.slope == pytest.approx(0.0, abs=1e-12) and t.plateau

    def test_increasing(self):
        t = trend_from_series([60, 65, 70, 75])
        assert not t.plateau and t.slope > 0

    def test_single_day(self):
        with pytest.raises(InsufficientDays):
            trend_from_series([80])
