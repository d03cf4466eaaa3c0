"""Validated pipeline configuration (JSON on disk)."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .experiment import AcquisitionSchedule, ExperimentPlan, default_plans
from .svm.grid import DEFAULT_C_EXPONENTS, DEFAULT_GAMMA_EXPONENTS, GridSpec


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScheduleEntry(_Strict):
    day: int = Field(ge=1)
    slot: Literal["0900", "1200", "1400"]
    acquisition: int = Field(ge=0)


class PlanConfig(_Strict):
    experiment: int = Field(ge=1)
    training: int
    testing: list[int] = Field(min_length=1)
    config: Literal["I", "II"]

    @model_validator(mode="after")
    def _training_first(self):
        if self.testing[0] != self.training:
            raise ValueError("testing[0] must equal the training acquisition")
        return self


class GridConfig(_Strict):
    c_exponents: list[int] = Field(default_factory=lambda: list(DEFAULT_C_EXPONENTS), min_length=1)
    gamma_exponents: list[int] = Field(default_factory=lambda: list(DEFAULT_GAMMA_EXPONENTS),
                                       min_length=1)


class SvmConfig(_Strict):
    tol: float = Field(1e-3, gt=0)
    max_kernel_evals: int = Field(10**7, gt=0)
    cache_mb: int = Field(64, gt=0)
    warm_start: bool = True


class SmoothingConfig(_Strict):
    candidates: list[int] = Field(default_factory=lambda: list(range(1, 26, 2)), min_length=1)
    mode: Literal["sliding", "tumbling"] = "sliding"

    @field_validator("candidates")
    @classmethod
    def _odd(cls, v):
        if any(c < 1 or c % 2 == 0 for c in v):
            raise ValueError("smoothing windows must be positive odd integers")
        if 1 not in v:
            raise ValueError("smoothing candidates must include 1")
        return v


class DriftConfig(_Strict):
    electrode_shift_angle: float = 0.3
    shift_jitter: float = Field(0.02, ge=0)
    fatigue_gain_per_acquisition: float = Field(0.97, gt=0, le=1)
    noise_std: float = Field(0.002, ge=0)
    force_jitter: float = Field(0.2, ge=0)


class SynthConfig(_Strict):
    channels: int = Field(10, ge=2)
    sample_rate: float = Field(100.0, gt=0)
    pattern_seed: int = 0
    min_angle_deg: float = Field(25.0, gt=0, lt=90)
    spread: float = Field(1.0, gt=0)
    kernel_ms: float = Field(40.0, gt=0)
    firing_rate: float = Field(20.0, gt=0)
    n_units: int = Field(400, gt=0)
    rest_level: float = Field(0.02, gt=0)
    rise_ms: float = Field(150.0, gt=0)
    fall_ms: float = Field(200.0, gt=0)
    hold_gain_per_s: float = Field(0.1, ge=0)
    drift: DriftConfig = Field(default_factory=DriftConfig)


class StftConfig(_Strict):
    block: int = Field(4, ge=2)
    bins: int | None = None


def _default_schedule():
    return [ScheduleEntry(day=d, slot=s, acquisition=a)
            for (d, s), a in AcquisitionSchedule.default().items()]


def _default_plans():
    return [PlanConfig(experiment=p.experiment_id, training=p.training_acq,
                       testing=list(p.testing_acqs), config=p.config) for p in default_plans()]


class PipelineConfig(_Strict):
    """Every knob of the pipeline; unknown keys are rejected."""

    seed: int = Field(2016, ge=0, lt=2**64)
    schedule: list[ScheduleEntry] = Field(default_factory=_default_schedule, min_length=1)
    plans: list[PlanConfig] = Field(default_factory=_default_plans, min_length=1)
    feature_kinds: list[Literal["WL", "VAR", "STFT"]] = Field(default_factory=lambda: ["WL", "STFT"],
                                                             min_length=1)
    window_ms: float = Field(200.0, gt=0)
    step_ms: float = Field(10.0, gt=0)
    cutoff_hz: float = Field(1.0, gt=0)
    stft: StftConfig = Field(default_factory=StftConfig)
    subsample_stride: int = Field(10, ge=1)
    standardize: bool = True
    grid: GridConfig = Field(default_factory=GridConfig)
    svm: SvmConfig = Field(default_factory=SvmConfig)
    smoothing: SmoothingConfig = Field(default_factory=SmoothingConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)

    @model_validator(mode="after")
    def _consistent(self):
        self.schedule_obj()  # uniqueness checks
        ids = {e.acquisition for e in self.schedule}
        for p in self.plans:
            missing = [a for a in p.testing if a not in ids]
            if missing:
                raise ValueError(f"plan {p.experiment} uses unscheduled acquisitions {missing}")
        exps = [p.experiment for p in self.plans]
        if len(set(exps)) != len(exps):
            raise ValueError("experiment ids must be unique")
        return self

    def schedule_obj(self):
        return AcquisitionSchedule(tuple(((e.day, e.slot), e.acquisition) for e in self.schedule))

    def plan_objs(self):
        return [ExperimentPlan(p.experiment, p.training, tuple(p.testing), p.config,
                               tuple(self.feature_kinds)) for p in self.plans]

    def grid_spec(self):
        return GridSpec(tuple(self.grid.c_exponents), tuple(self.grid.gamma_exponents))

    def canonical_json(self):
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        """Short SHA-256 of the canonical JSON form."""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def provenance(self):
        return {"config_hash": self.config_hash(), "seed": self.seed}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


def _format_errors(err):
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_config(data):
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def load_config(path=None, seed=None, overrides=None):
    """Load a config JSON file (defaults when ``path`` is None).

    ``overrides`` is a nested dict merged over the file before validation.
    """
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    if overrides:
        data = _merge(data, overrides)
    if seed is not None:
        data = dict(data, seed=seed)
    return parse_config(data)


def _merge(base, extra):
    out = dict(base)
    for k, v in extra.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def drift_free(config):
    """Same configuration with the electrode shift and fatigue switched off."""
    return load_config(overrides=_merge(config.model_dump(mode="json"), {
        "synth": {"drift": {"electrode_shift_angle": 0.0, "fatigue_gain_per_acquisition": 1.0}}}))

