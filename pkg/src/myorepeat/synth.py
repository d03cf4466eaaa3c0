"""Seeded synthetic sEMG envelope generator with day-level electrode drift.

Each movement drives a pooled motor-unit population whose Poisson firing,
convolved with a MUAP-shaped kernel, gives a common drive signal. Electrode
channels see that drive through a class-specific activation pattern. Daily
re-application of the armband rotates the pattern across neighbouring
channels; fatigue scales the amplitude through the day.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .recording import SLOTS, Recording

N_MOVEMENTS = 17
REPETITIONS = 10
MOVE_SECONDS = 5.0
REST_SECONDS = 3.0


@dataclass(frozen=True)
class MuapModel:
    """Subject model: activation patterns and motor-unit drive parameters.

    Attributes
    ----------
    activations : ndarray, shape (17, C)
        Non-negative channel activation vector of movements 1..17.
    rest_activation : ndarray, shape (C,)
        Background activation while at rest.
    kernel_ms : float
        Width (standard deviation) of the MUAP envelope kernel.
    firing_rate : float
        Mean firing rate of one motor unit at full activation, Hz.
    n_units : int
        Motor units in the pool.
    rest_level : float
        Pool activity at rest relative to full activation.
    rise_ms, fall_ms : float
        Time constants of contraction onset and release.
    hold_gain_per_s : float
        Relative amplitude growth per second of sustained contraction.
    """

    activations: np.ndarray
    rest_activation: np.ndarray
    kernel_ms: float = 40.0
    firing_rate: float = 20.0
    n_units: int = 400
    rest_level: float = 0.05
    rise_ms: float = 150.0
    fall_ms: float = 200.0
    hold_gain_per_s: float = 0.1

    def __post_init__(self):
        a = np.asarray(self.activations, dtype=float)
        if a.ndim != 2 or a.shape[0] != N_MOVEMENTS:
            raise ValueError(f"activations must be ({N_MOVEMENTS}, C)")
        if np.any(a < 0) or np.any(np.asarray(self.rest_activation) < 0):
            raise ValueError("activations must be non-negative")
        for name in ("kernel_ms", "firing_rate", "n_units", "rest_level", "rise_ms", "fall_ms"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(self, "activations", a)
        object.__setattr__(self, "rest_activation", np.asarray(self.rest_activation, dtype=float))

    @property
    def channels(self):
        return self.activations.shape[1]


@dataclass(frozen=True)
class DriftModel:
    """Acquisition-to-acquisition disturbances.

    ``electrode_shift_angle`` is the rotation in radians between the day-1
    armband placement and the placement of any later day; ``shift_jitter`` is
    its relative day-to-day spread. ``force_jitter`` is
    the relative standard deviation of the contraction strength from one
    repetition to the next.
    """

    electrode_shift_angle: float = 0.0
    fatigue_gain_per_acquisition: float = 1.0
    noise_std: float = 0.0
    force_jitter: float = 0.0
    shift_jitter: float = 0.0

    def __post_init__(self):
        if self.force_jitter < 0 or self.shift_jitter < 0:
            raise ValueError("jitter parameters must be >= 0")
        if not 0 < self.fatigue_gain_per_acquisition <= 1:
            raise ValueError("fatigue gain must lie in (0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def default_muap_model(seed=0, channels=10, min_angle_deg=25.0, spread=1.0, **params):
    """Draw distinct activation patterns for the 17 movements.

    Patterns are log-normal per channel and rejected until every pair is at
    least ``min_angle_deg`` apart.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xA11,)))
    cos_max = np.cos(np.deg2rad(min_angle_deg))
    acts = []
    while len(acts) < N_MOVEMENTS:
        v = np.exp(rng.normal(0.0, spread, channels))
        v /= np.linalg.norm(v)
        if all(float(v @ u) < cos_max for u in acts):
            acts.append(v)
    rest = np.full(channels, 1.0 / np.sqrt(channels))
    return MuapModel(np.array(acts), rest, **params)


def givens_chain(channels, angles):
    """Product of Givens rotations on consecutive channel pairs (0,1), (1,2), ...

    ``angles`` holds one angle per pair, or a scalar applied to every pair.
    """
    angles = np.broadcast_to(np.asarray(angles, dtype=float), (channels - 1,))
    out = np.eye(channels)
    for i, theta in enumerate(angles):
        c, s = np.cos(theta), np.sin(theta)
        g = np.eye(channels)
        g[i, i] = g[i + 1, i + 1] = c
        g[i, i + 1] = -s
        g[i + 1, i] = s
        out = g @ out
    return out


def day_rotation(drift, day, channels, seed):
    """Channel mixing caused by the armband re-application on ``day``.

    Day 1 is the reference placement. Every later day is offset from it by
    the shift angle on each adjacent channel pair, scaled by a per-day factor
    ``1 + shift_jitter * N(0, 1)``; the offset does not accumulate over days.
    """
    if day <= 1 or drift.electrode_shift_angle == 0:
        return np.eye(channels)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xDA7, int(day))))
    angle = drift.electrode_shift_angle * (1.0 + drift.shift_jitter * rng.standard_normal())
    return givens_chain(channels, angle)


def stimulus_timeline(rate):
    """Labels of the stimulus protocol: (rest, movement) x 10 reps x 17 classes."""
    n_rest = int(round(REST_SECONDS * rate))
    n_move = int(round(MOVE_SECONDS * rate))
    rep = np.concatenate([np.zeros(n_rest, dtype=np.int64), np.ones(n_move, dtype=np.int64)])
    blocks = [rep * c for c in range(1, N_MOVEMENTS + 1) for _ in range(REPETITIONS)]
    return np.concatenate(blocks), n_rest, n_move


def _muap_kernel(width_ms, rate):
    sigma = width_ms * rate / 1000.0
    half = max(1, int(np.ceil(4 * sigma)))
    t = np.arange(-half, half + 1)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _drive(rate_hz, kernel, fs, rng):
    """Poisson spike counts per sample convolved with the MUAP kernel."""
    counts = rng.poisson(rate_hz / fs)
    full = np.convolve(counts, kernel, mode="same")
    return full


def generate_acquisition(model, drift, day, slot, seed, acquisition_id=0, rate=100.0):
    """Simulate one full acquisition at ``rate`` Hz.

    Parameters
    ----------
    model : MuapModel
    drift : DriftModel
    day : int
        1-based day; day 1 carries no electrode shift.
    slot : {"0900", "1200", "1400"}
    seed : int
        Corpus seed. The acquisition's own stream is derived from
        ``(seed, day, slot)``.

    Returns
    -------
    Recording
    """
    if slot not in SLOTS:
        raise ValueError(f"slot must be one of {SLOTS}")
    slot_idx = SLOTS.index(slot)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(day), slot_idx)))

    labels, n_rest, n_move = stimulus_timeline(rate)
    n = labels.size
    period = n_rest + n_move
    n_reps = N_MOVEMENTS * REPETITIONS

    # reaction latency on contraction and release, 100-300 ms
    lat_on = rng.uniform(0.1, 0.3, n_reps) * rate
    lat_off = rng.uniform(0.1, 0.3, n_reps) * rate
    strength = np.maximum(1.0 + drift.force_jitter * rng.standard_normal(n_reps), 0.05)
    onset = np.arange(n_reps) * period + n_rest + lat_on
    release = np.arange(n_reps) * period + n_rest + n_move + lat_off

    idx = np.arange(n, dtype=float)
    rep_of = np.clip(np.searchsorted(onset, idx, side="right") - 1, 0, n_reps - 1)
    before = idx < onset[0]
    on, off = onset[rep_of], release[rep_of]
    tau_r = model.rise_ms * rate / 1000.0
    tau_f = model.fall_ms * rate / 1000.0
    hold = model.hold_gain_per_s / rate
    rise = (1.0 - np.exp(-np.maximum(idx - on, 0.0) / tau_r)) * (1.0 + hold * np.maximum(idx - on, 0.0))
    at_release = (1.0 - np.exp(-(off - on) / tau_r)) * (1.0 + hold * (off - on))
    fall = at_release * np.exp(-np.maximum(idx - off, 0.0) / tau_f)
    profile = np.where(idx < off, rise, fall)
    profile[before] = 0.0
    profile *= strength[rep_of]
    act_class = rep_of // REPETITIONS  # 0-based movement index

    kernel = _muap_kernel(model.kernel_ms, rate)
    pool = model.n_units * model.firing_rate
    move_drive = _drive(pool * profile, kernel, rate, rng) / (pool / rate)
    rest_drive = _drive(np.full(n, pool * model.rest_level), kernel, rate, rng) / (pool / rate)

    rot = day_rotation(drift, day, model.channels, seed)
    acts = model.activations @ rot.T
    rest = rot @ model.rest_activation
    gain = drift.fatigue_gain_per_acquisition ** slot_idx

    env = gain * (rest_drive[:, None] * rest[None, :] + move_drive[:, None] * acts[act_class])
    if drift.noise_std > 0:
        env = env + rng.normal(0.0, drift.noise_std, env.shape)
    env = np.maximum(env, 0.0)

    return Recording(env, idx / rate, labels, float(rate), acquisition_id=int(acquisition_id),
                     day=int(day), slot=slot)


def generate_corpus(model, drift, schedule, seed, rate=100.0):
    """Generate every acquisition of ``schedule``.

    Parameters
    ----------
    schedule : AcquisitionSchedule or mapping of (day, slot) -> acquisition id

    Returns
    -------
    dict
        Acquisition id -> Recording, in schedule order.
    """
    items = schedule.items() if hasattr(schedule, "items") else schedule
    return {
        acq: generate_acquisition(model, drift, day, slot, seed, acquisition_id=acq, rate=rate)
        for (day, slot), acq in items
    }
