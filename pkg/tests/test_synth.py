"""Synthetic MUAP-train acquisitions with electrode-shift and fatigue drift."""

from dataclasses import replace

import numpy as np
import pytest

from myorepeat.config import load_config
from myorepeat.dsp import segment_windows
from myorepeat.experiment import AcquisitionSchedule, TRAIN, preprocess, split_by_repetition
from myorepeat.features import extract_features
from myorepeat.pipeline import synth_models
from myorepeat.recording import relabel_center_thirds
from myorepeat.synth import (
    DriftModel, MuapModel, day_rotation, default_muap_model, generate_acquisition,
    generate_corpus, givens_chain, stimulus_timeline,
)

MODEL = default_muap_model(seed=0)


@pytest.fixture(scope="module")
def day1():
    return generate_acquisition(MODEL, DriftModel(), 1, "0900", seed=11)


def _class_means(rec, centre=False):
    labels = relabel_center_thirds(rec.labels) if centre else rec.labels
    return np.array([rec.samples[labels == c].mean(axis=0) for c in range(1, 18)])


class TestModel:
    def test_patterns_distinct_and_positive(self):
        a = MODEL.activations
        assert a.shape == (17, 10) and np.all(a >= 0)
        cos = a @ a.T / np.outer(np.linalg.norm(a, axis=1), np.linalg.norm(a, axis=1))
        assert np.max(cos[~np.eye(17, dtype=bool)]) < 0.99

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            MuapModel(np.ones((17, 4)), np.ones(4), firing_rate=0)
        with pytest.raises(ValueError):
            MuapModel(-np.ones((17, 4)), np.ones(4))
        with pytest.raises(ValueError):
            DriftModel(fatigue_gain_per_acquisition=1.5)
        with pytest.raises(ValueError):
            DriftModel(noise_std=-1)

    def test_givens_chain_is_rotation(self):
        r = givens_chain(10, 0.3)
        np.testing.assert_allclose(r @ r.T, np.eye(10), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0)

    def test_day_one_has_no_shift(self):
        drift = DriftModel(electrode_shift_angle=0.4, shift_jitter=0.1)
        np.testing.assert_array_equal(day_rotation(drift, 1, 10, 5), np.eye(10))
        assert not np.allclose(day_rotation(drift, 3, 10, 5), np.eye(10))


class TestAcquisition:
    def test_protocol_timeline(self, day1):
        labels, n_rest, n_move = stimulus_timeline(100.0)
        assert (n_rest, n_move) == (300, 500)
        assert labels.size == 17 * 10 * 800 and len(day1) == labels.size
        assert len(day1) / day1.sample_rate == pytest.approx(1360.0)
        np.testing.assert_array_equal(day1.labels, labels)
        period = labels.reshape(170, 800)
        assert np.all(period[:, :300] == 0)
        expect = np.broadcast_to(np.repeat(np.arange(1, 18), 10)[:, None], (170, 500))
        np.testing.assert_array_equal(period[:, 300:], expect)

    def test_deterministic(self, day1):
        again = generate_acquisition(MODEL, DriftModel(), 1, "0900", seed=11)
        np.testing.assert_array_equal(again.samples, day1.samples)
        other = generate_acquisition(MODEL, DriftModel(), 1, "0900", seed=12)
        assert not np.array_equal(other.samples, day1.samples)

    def test_non_negative_with_noise(self):
        rec = generate_acquisition(MODEL, DriftModel(noise_std=0.05), 2, "1200", seed=1)
        assert np.all(rec.samples >= 0)

    def test_drift_free_days_match(self):
        # Reaction latency and shot noise of the motor-unit pool are the only
        # day-to-day differences left. Centre thirds skip the onset latency;
        # a large pool without hold growth keeps shot noise well below 1 %.
        model = default_muap_model(seed=0, n_units=4000, hold_gain_per_s=0.0)
        m1, m4 = (_class_means(generate_acquisition(model, DriftModel(), day, "0900", seed=11),
                               centre=True) for day in (1, 4))
        assert np.max(np.abs(m4 - m1) / m1) < 0.01

    def test_shift_moves_class_means(self, day1):
        drift = DriftModel(electrode_shift_angle=0.3)
        day2 = generate_acquisition(MODEL, drift, 2, "0900", seed=11)
        # rotated patterns may dip below zero, where the envelope is clipped
        expect = _class_means(day1) @ givens_chain(10, 0.3).T
        got = _class_means(day2)
        clear = expect > 0.05
        np.testing.assert_allclose(got[clear], expect[clear], rtol=0.03)
        assert np.all(got[expect < 0] < 0.05)

    def test_fatigue_scales_later_slots(self):
        drift = DriftModel(fatigue_gain_per_acquisition=0.9)
        a = generate_acquisition(MODEL, drift, 1, "0900", seed=3)
        c = generate_acquisition(MODEL, drift, 1, "1400", seed=3)
        ratio = c.samples.mean() / a.samples.mean()
        assert ratio == pytest.approx(0.81, rel=0.02)

    def test_bad_slot(self):
        with pytest.raises(ValueError):
            generate_acquisition(MODEL, DriftModel(), 1, "0800", seed=0)

    def test_wl_nearest_centroid_separability(self):
        # every channel carries the same motor-unit train, so a WL vector is
        # the class pattern times a random magnitude: compare directions
        model, drift = synth_models(load_config())
        rec = preprocess(generate_acquisition(model, replace(drift, electrode_shift_angle=0.0,
                                                              fatigue_gain_per_acquisition=1.0),
                                              1, "0900", seed=11))
        split = split_by_repetition(rec)
        fm = extract_features(segment_windows(rec, 200, 10), "WL")
        parts, reps = split.parts[fm.starts], split.repetitions[fm.starts]
        train = parts == TRAIN
        held = (reps == 10) & (fm.labels > 0)
        v = fm.values / np.linalg.norm(fm.values, axis=1, keepdims=True)
        cents = np.array([v[train & (fm.labels == c)].mean(axis=0) for c in range(18)])
        d = ((v[held][:, None, :] - cents[None]) ** 2).sum(axis=2)
        assert np.mean(d.argmin(axis=1) == fm.labels[held]) >= 0.95


def test_corpus():
    small = AcquisitionSchedule.from_mapping({(1, "0900"): 2, (2, "0900"): 6})
    corpus = generate_corpus(MODEL, DriftModel(), small, seed=4)
    assert list(corpus) == [2, 6]
    assert corpus[6].day == 2 and corpus[6].acquisition_id == 6
    assert len(AcquisitionSchedule.default()) == 12
