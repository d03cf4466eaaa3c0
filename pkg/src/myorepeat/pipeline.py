"""File-based, resumable pipeline: corpus -> preprocessing -> features -> grid -> models -> report.

Each stage is a list of independent jobs. A job reads and writes plain
CSV/JSON/NPZ files under one output directory and is recorded in
``manifest.json`` together with a fingerprint of its inputs (config hash,
job parameters, input file digests) and the digests of its outputs. A later
run skips every job whose fingerprint is unchanged and whose outputs are
still on disk with the recorded digests.

Jobs are pure functions of their inputs, so results do not depend on how
many worker processes run them.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .experiment import (CellResult, ExperimentData, ReportTable, Standardizer,
                         acquisition_data, evaluate_model, experiment_data, preprocess,
                         trend_analysis)
from .features import FeatureMatrix, features_per_channel
from .recording import load_recording, save_recording
from .svm.grid import (GridResult, GridSpec, grid_search_many, model_from_alphas, pair_sizes,
                       select_best)
from .svm.ovo import OvoSvmModel
from .synth import DriftModel, default_muap_model, generate_acquisition

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class StageError(RuntimeError):
    """A stage cannot run because an input is missing."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# ---------------------------------------------------------------------------
# in-memory building blocks


def synth_models(cfg):
    s = cfg.synth
    model = default_muap_model(
        seed=s.pattern_seed, channels=s.channels, min_angle_deg=s.min_angle_deg, spread=s.spread,
        kernel_ms=s.kernel_ms, firing_rate=s.firing_rate, n_units=s.n_units,
        rest_level=s.rest_level, rise_ms=s.rise_ms, fall_ms=s.fall_ms,
        hold_gain_per_s=s.hold_gain_per_s)
    drift = DriftModel(**s.drift.model_dump())
    return model, drift


def synthesize(cfg, day, slot, acq):
    model, drift = synth_models(cfg)
    return generate_acquisition(model, drift, day, slot, cfg.seed, acquisition_id=acq,
                                rate=cfg.synth.sample_rate)


def acquisition_features(cfg, rec, kind):
    """``AcquisitionData`` of a preprocessed recording."""
    return acquisition_data(rec, kind, cfg.window_ms, cfg.step_ms, cfg.stft.block, cfg.stft.bins)


def scaled_experiment_data(cfg, plan, data):
    """Train/validation/test sets of one experiment, standardized on the training set."""
    ed = experiment_data(plan, data, cfg.subsample_stride)
    scaler = (Standardizer.fit(ed.train) if cfg.standardize
              else Standardizer.identity(ed.train.dim))
    scaled = ExperimentData(scaler.apply(ed.train), scaler.apply(ed.validation),
                            {a: scaler.apply(t) for a, t in ed.tests.items()})
    return scaled, scaler


def sweep(cfg, train, validations, gamma_exponents=None, keep_models=True):
    """Grid sweep over all C and the given gamma exponents (default: all)."""
    spec = cfg.grid_spec()
    if gamma_exponents is not None:
        spec = GridSpec(spec.c_exponents, tuple(gamma_exponents))
    return grid_search_many(train, validations, spec, cfg.svm.tol, cfg.svm.warm_start,
                            keep_models, cfg.svm.max_kernel_evals)


def merge_columns(spec, columns):
    """Combine single-gamma sweeps into one result per validation set.

    ``columns`` maps gamma exponent -> list of GridResult (one per
    validation set). The best point follows the global tie rule; its model
    is the best model of its own column.
    """
    n_val = len(next(iter(columns.values())))
    merged = []
    for v in range(n_val):
        acc = np.column_stack([columns[g][v].accuracy[:, 0] for g in spec.gamma_exponents])
        res = GridResult(spec, acc)
        _, b = select_best(res)
        best_col = columns[spec.gamma_exponents[b]][v]
        res.model, res.solution = best_col.model, best_col.solution
        merged.append(res)
    return merged


def run_experiments(cfg, corpus, plans=None, schedule=None):
    """Run the protocol in memory and return the ``ReportTable``.

    Parameters
    ----------
    cfg : PipelineConfig
    corpus : mapping of acquisition id -> raw Recording
    plans : list of ExperimentPlan, optional
        Defaults to the plans of ``cfg``.
    schedule : AcquisitionSchedule, optional
        Defaults to the schedule of ``cfg``.
    """
    plans = plans or cfg.plan_objs()
    schedule = schedule or cfg.schedule_obj()
    needed = _group_acqs(plans)
    pre = {a: preprocess(corpus[a], cfg.cutoff_hz) for a in needed if a in corpus}
    report = ReportTable(plans)
    for kind in cfg.feature_kinds:
        data = {a: acquisition_features(cfg, r, kind) for a, r in pre.items()}
        by_train = {}
        for p in plans:
            by_train.setdefault(p.training_acq, []).append(p)
        for group in by_train.values():
            sets = [scaled_experiment_data(cfg, p, data)[0] for p in group]
            results = sweep(cfg, sets[0].train, [s.validation for s in sets])
            for p, s, res in zip(group, sets, results):
                report.cells.extend(evaluate_model(
                    res.model, s.tests, schedule, p.experiment_id, kind,
                    cfg.smoothing.candidates, cfg.smoothing.mode))
    _sort_cells(report)
    return report


def run_experiment(plan, schedule, corpus, cfg):
    """Run a single experiment plan in memory; returns a ``ReportTable``."""
    return run_experiments(cfg, corpus, [plan], schedule)


def _sort_cells(report):
    order = {p.experiment_id: i for i, p in enumerate(report.plans)}
    kinds = {k: i for i, k in enumerate(("WL", "VAR", "STFT"))}
    tests = {(p.experiment_id, a): i for p in report.plans for i, a in enumerate(p.testing_acqs)}
    report.cells.sort(key=lambda c: (order[c.experiment], kinds[c.kind],
                                     tests[(c.experiment, c.test_acq)]))


# ---------------------------------------------------------------------------
# files


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _read_json(path):
    return json.loads(Path(path).read_text())


@dataclass(frozen=True)
class Layout:
    """Paths of every pipeline artifact below one output directory."""

    root: Path

    def corpus(self, acq):
        return self.root / "corpus" / f"acq_{acq:02d}.csv"

    def preprocessed(self, acq):
        return self.root / "preprocessed" / f"acq_{acq:02d}.csv"

    def features(self, acq, kind):
        return self.root / "features" / f"acq_{acq:02d}_{kind}.csv"

    def grid(self, train_acq, kind, gamma_exp):
        return self.root / "grid" / f"train_{train_acq:02d}_{kind}_g{gamma_exp:+d}.npz"

    def model(self, exp, kind):
        return self.root / "models" / f"exp_{exp}_{kind}.json"

    def results(self, exp, kind):
        return self.root / "results" / f"exp_{exp}_{kind}.json"

    def confusion(self, exp, kind, acq, normalized=False):
        tag = "normalized" if normalized else "counts"
        return self.root / "confusion" / f"exp_{exp}_{kind}_acq_{acq:02d}_{tag}.csv"

    def report(self, name):
        return self.root / "reports" / name

    def plot(self, name):
        return self.root / "plots" / name

    def rel(self, path):
        return str(Path(path).relative_to(self.root))


def _require(stage, paths):
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise StageError(stage, "missing input file(s): " + ", ".join(missing))


# ---------------------------------------------------------------------------
# jobs (top-level functions so they can run in worker processes)


def _cfg(cfg_json):
    return PipelineConfig.model_validate_json(cfg_json)


def job_synth(cfg_json, root, acq):
    cfg, lay = _cfg(cfg_json), Layout(Path(root))
    day, slot = cfg.schedule_obj().key_of(acq)
    rec = synthesize(cfg, day, slot, acq)
    out = lay.corpus(acq)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_recording(rec, out, cfg.provenance())
    return [out, out.with_suffix(".json")]


def job_preprocess(cfg_json, root, acq):
    cfg, lay = _cfg(cfg_json), Layout(Path(root))
    _require("preprocess", [lay.corpus(acq)])
    rec = preprocess(load_recording(lay.corpus(acq)), cfg.cutoff_hz)
    out = lay.preprocessed(acq)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_recording(rec, out, cfg.provenance())
    return [out, out.with_suffix(".json")]


def job_features(cfg_json, root, acq, kind):
    cfg, lay = _cfg(cfg_json), Layout(Path(root))
    _require("features", [lay.preprocessed(acq)])
    rec = load_recording(lay.preprocessed(acq))
    data = acquisition_features(cfg, rec, kind)
    out = lay.features(acq, kind)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.features.to_csv(out, cfg.provenance())
    return [out]


def _file_key(path):
    st = Path(path).stat()
    return str(path), st.st_mtime_ns, st.st_size


@lru_cache(maxsize=32)
def _cached_recording(key):
    return load_recording(key[0])


@lru_cache(maxsize=32)
def _cached_features(key, kind, channels):
    return FeatureMatrix.from_csv(key[0], kind, channels)


def _load_data(cfg, lay, stage, acqs, kind):
    """Features and split partition of ``acqs``; files are cached per process."""
    paths = [lay.features(a, kind) for a in acqs] + [lay.preprocessed(a) for a in acqs]
    _require(stage, paths)
    bins = cfg.stft.block if cfg.stft.bins is None else cfg.stft.bins
    out = {}
    for a in acqs:
        rec = _cached_recording(_file_key(lay.preprocessed(a)))
        fm = _cached_features(_file_key(lay.features(a, kind)), kind, rec.channel_count)
        if fm.per_channel != features_per_channel(kind, bins):
            raise StageError(stage, f"{lay.features(a, kind)} has an unexpected layout")
        out[a] = acquisition_data(rec, kind, features=fm)
    return out


def _group_plans(cfg, train_acq):
    return [p for p in cfg.plan_objs() if p.training_acq == train_acq]


def _group_acqs(group):
    acqs = []
    for p in group:
        for a in (p.training_acq,) + p.testing_acqs:
            if a not in acqs:
                acqs.append(a)
    return acqs


def job_grid(cfg_json, root, train_acq, kind, gamma_exp):
    """One gamma column of the grid for every experiment sharing ``train_acq``."""
    cfg, lay = _cfg(cfg_json), Layout(Path(root))
    group = _group_plans(cfg, train_acq)
    data = _load_data(cfg, lay, "grid", _group_acqs(group), kind)
    sets = [scaled_experiment_data(cfg, p, data)[0] for p in group]
    results = sweep(cfg, sets[0].train, [s.validation for s in sets], [gamma_exp])
    arrays = {"experiments": np.array([p.experiment_id for p in group])}
    for p, res in zip(group, results):
        alphas, rhos = res.solution
        arrays[f"accuracy_{p.experiment_id}"] = res.accuracy[:, 0]
        arrays[f"alphas_{p.experiment_id}"] = np.concatenate(alphas)
        arrays[f"rhos_{p.experiment_id}"] = np.asarray(rhos)
    out = lay.grid(train_acq, kind, gamma_exp)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        np.savez(fh, **arrays)
    return [out]


def job_train(cfg_json, root, exp, kind):
    """Pick (C*, gamma*) from the grid columns and store the chosen model."""
    cfg, lay = _cfg(cfg_json), Layout(Path(root))
    plan = next(p for p in cfg.plan_objs() if p.experiment_id == exp)
    spec = cfg.grid_spec()
    cols = [lay.grid(plan.training_acq, kind, g) for g in spec.gamma_exponents]
    _require("train", cols)
    data = _load_data(cfg, lay, "train", _group_acqs([plan]), kind)
    sets, scaler = scaled_experiment_data(cfg, plan, data)
    sizes = np.cumsum(pair_sizes(sets.train.labels))[:-1]
    columns = {}
    for g, path in zip(spec.gamma_exponents, cols):
        with np.load(path) as z:
            res = GridResult(GridSpec(spec.c_exponents, (g,)), z[f"accuracy_{exp}"][:, None])
            res.solution = (np.split(z[f"alphas_{exp}"], sizes), z[f"rhos_{exp}"])
        columns[g] = [res]
    best = merge_columns(spec, columns)[0]
    model = model_from_alphas(sets.train, *best.solution, best.best_c, best.best_gamma)
    out = lay.model(exp, kind)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, {
        "provenance": cfg.provenance(), "experiment": exp, "kind": kind,
        "C": best.best_c, "gamma": best.best_gamma, "validation_accuracy": best.best_accuracy,
        "grid": best.to_dict(), "standardizer": {"mean": scaler.mean.tolist(),
                                                 "scale": scaler.scale.tolist()},
        "model": model.to_dict(),
    })
    return [out]


def job_evaluate(cfg_json, root, exp, kind):
    cfg, lay = _cfg(cfg_json), Layout(Path(root))
    plan = next(p for p in cfg.plan_objs() if p.experiment_id == exp)
    _require("evaluate", [lay.model(exp, kind)])
    stored = _read_json(lay.model(exp, kind))
    model = OvoSvmModel.from_dict(stored["model"])
    scaler = Standardizer(np.array(stored["standardizer"]["mean"]),
                          np.array(stored["standardizer"]["scale"]))
    data = _load_data(cfg, lay, "evaluate", _group_acqs([plan]), kind)
    ed = experiment_data(plan, data, cfg.subsample_stride)
    tests = {a: scaler.apply(t) for a, t in ed.tests.items()}
    cells = evaluate_model(model, tests, cfg.schedule_obj(), exp, kind,
                           cfg.smoothing.candidates, cfg.smoothing.mode)
    outs = []
    rows = []
    for c in cells:
        for norm in (False, True):
            path = lay.confusion(exp, kind, c.test_acq, norm)
            path.parent.mkdir(parents=True, exist_ok=True)
            c.confusion.to_csv(path, normalized=norm, provenance=cfg.provenance())
            outs.append(path)
        row = {k: getattr(c, k) for k in ("experiment", "kind", "test_acq", "day", "raw",
                                          "smoothed", "window", "movement_raw",
                                          "movement_smoothed", "C", "gamma", "n_windows")}
        row["per_class_accuracy"] = [None if np.isnan(v) else v
                                     for v in c.confusion.per_class_accuracy().tolist()]
        rows.append(row)
    out = lay.results(exp, kind)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, {"provenance": cfg.provenance(), "validation_acquisitions":
                      list(plan.validation_acqs), "cells": rows})
    return outs + [out]


# ---------------------------------------------------------------------------
# runner


class Runner:
    """Executes jobs stage by stage, skipping those already done."""

    def __init__(self, cfg, out, jobs=1):
        self.cfg = cfg
        self.layout = Layout(Path(out))
        self.jobs = max(1, int(jobs))
        self.cfg_json = cfg.model_dump_json()
        self.executed = []
        self.skipped = []
        self.layout.root.mkdir(parents=True, exist_ok=True)
        path = self.layout.root / MANIFEST
        self.manifest = _read_json(path) if path.exists() else {}
        self._digests = {}

    def _digest(self, path):
        key = str(path)
        if key not in self._digests:
            self._digests[key] = _sha256(path)
        return self._digests[key]

    def _fingerprint(self, key, inputs):
        payload = {"config": self.cfg.config_hash(), "job": key,
                   "inputs": {self.layout.rel(p): self._digest(p) for p in inputs}}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def _done(self, key, fingerprint):
        entry = self.manifest.get(key)
        if not entry or entry.get("fingerprint") != fingerprint:
            return False
        for rel, digest in entry["outputs"].items():
            path = self.layout.root / rel
            if not path.exists() or self._digest(path) != digest:
                return False
        return True

    def run(self, stage, specs):
        """Run ``specs``: a list of (key, function, args, input paths)."""
        pending = []
        for key, fn, args, inputs in specs:
            _require(stage, inputs)
            fp = self._fingerprint(key, inputs)
            if self._done(key, fp):
                self.skipped.append(key)
            else:
                pending.append((key, fn, args, fp))
        if not pending:
            return
        log.info("%s: running %d job(s)", stage, len(pending))
        calls = [(fn, (self.cfg_json, str(self.layout.root)) + tuple(args))
                 for _, fn, args, _ in pending]
        if self.jobs > 1 and len(calls) > 1:
            with ProcessPoolExecutor(max_workers=min(self.jobs, len(calls))) as pool:
                futures = [pool.submit(fn, *a) for fn, a in calls]
                outputs = [f.result() for f in futures]
        else:
            outputs = [fn(*a) for fn, a in calls]
        for (key, _, _, fp), outs in zip(pending, outputs):
            for p in outs:
                self._digests.pop(str(p), None)
            self.manifest[key] = {"fingerprint": fp,
                                  "outputs": {self.layout.rel(p): self._digest(p) for p in outs}}
            self.executed.append(key)
        _write_json(self.layout.root / MANIFEST, self.manifest)

    # stages ---------------------------------------------------------------

    def _acqs(self, acqs=None):
        return list(acqs) if acqs else self.cfg.schedule_obj().ids

    def _plans(self, experiments=None):
        plans = self.cfg.plan_objs()
        if experiments:
            known = {p.experiment_id for p in plans}
            unknown = sorted(set(experiments) - known)
            if unknown:
                raise StageError("config", f"unknown experiment id(s) {unknown}")
            plans = [p for p in plans if p.experiment_id in experiments]
        return plans

    def synth(self, acqs=None):
        self.run("synth", [(f"synth/{a}", job_synth, (a,), []) for a in self._acqs(acqs)])

    def preprocess(self, acqs=None):
        lay = self.layout
        self.run("preprocess", [(f"preprocess/{a}", job_preprocess, (a,),
                                 [lay.corpus(a), lay.corpus(a).with_suffix(".json")])
                                for a in self._acqs(acqs)])

    def features(self, acqs=None):
        lay = self.layout
        self.run("features", [(f"features/{a}/{k}", job_features, (a, k),
                               [lay.preprocessed(a), lay.preprocessed(a).with_suffix(".json")])
                              for a in self._acqs(acqs) for k in self.cfg.feature_kinds])

    def _feature_inputs(self, acqs, kind):
        lay = self.layout
        return ([lay.features(a, kind) for a in acqs] + [lay.preprocessed(a) for a in acqs])

    def grid(self, experiments=None):
        trains = []
        for p in self._plans(experiments):
            if p.training_acq not in trains:
                trains.append(p.training_acq)
        specs = []
        for kind in self.cfg.feature_kinds:
            for t in trains:
                acqs = _group_acqs(_group_plans(self.cfg, t))
                for g in self.cfg.grid.gamma_exponents:
                    specs.append((f"grid/{t}/{kind}/{g}", job_grid, (t, kind, g),
                                  self._feature_inputs(acqs, kind)))
        # longest jobs (smallest gamma) first keeps worker pools busy
        specs.sort(key=lambda s: s[2][2])
        self.run("grid", specs)

    def train(self, experiments=None):
        self.grid(experiments)
        lay = self.layout
        specs = []
        for p in self._plans(experiments):
            for kind in self.cfg.feature_kinds:
                cols = [lay.grid(p.training_acq, kind, g) for g in self.cfg.grid.gamma_exponents]
                specs.append((f"train/{p.experiment_id}/{kind}", job_train, (p.experiment_id, kind),
                              cols + self._feature_inputs(_group_acqs([p]), kind)))
        self.run("train", specs)

    def evaluate(self, experiments=None):
        lay = self.layout
        specs = []
        for p in self._plans(experiments):
            for kind in self.cfg.feature_kinds:
                specs.append((f"evaluate/{p.experiment_id}/{kind}", job_evaluate,
                              (p.experiment_id, kind),
                              [lay.model(p.experiment_id, kind)]
                              + self._feature_inputs(_group_acqs([p]), kind)))
        self.run("evaluate", specs)

    def report(self):
        return write_report(self.cfg, self.layout)

    def run_all(self):
        self.synth()
        self.preprocess()
        self.features()
        self.train()
        self.evaluate()
        return self.report()


# ---------------------------------------------------------------------------
# report


def load_report(cfg, layout):
    """Assemble the ``ReportTable`` from the per-experiment result files."""
    plans = cfg.plan_objs()
    paths = [layout.results(p.experiment_id, k) for p in plans for k in cfg.feature_kinds]
    _require("report", paths)
    report = ReportTable(plans)
    for path in paths:
        for row in _read_json(path)["cells"]:
            report.cells.append(CellResult(
                row["experiment"], row["kind"], row["test_acq"], row["day"], row["raw"],
                row["smoothed"], row["window"], row["movement_raw"], row["movement_smoothed"],
                row["C"], row["gamma"], row["n_windows"]))
    _sort_cells(report)
    return report


def _plot_file(path, xs, ys, provenance, header):
    lines = [f"# {k}={v}" for k, v in provenance.items()] + [f"# {header}"]
    lines += [f"{x} {y:.6f}" for x, y in zip(xs, ys)]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def write_report(cfg, layout):
    """Write report CSVs, JSON, trend summaries and plot-data files; returns the table."""
    report = load_report(cfg, layout)
    prov = cfg.provenance()
    out = layout.report("report.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_csv(prov))
    layout.report("report_movements.csv").write_text(report.to_csv(prov, movements_only=True))
    trends = trend_analysis(report)
    body = report.to_dict()
    body["provenance"] = prov
    body["notes"] = {
        "accuracy": "per-window accuracy over all test windows, rest included",
        "movement_accuracy": "per-window accuracy over movement windows (classes 1-17) only",
        "validation": "validation windows are removed from the test sets they come from",
    }
    _write_json(layout.report("report.json"), body)
    _write_json(layout.report("trends.json"), {
        "provenance": prov,
        "trends": [{"experiment": e, "kind": k, "smoothed": s, **t.to_dict()}
                   for (e, k, s), t in trends.items()],
    })
    days = [cfg.schedule_obj().day_of(a) for a in report.plans[0].testing_acqs]
    for (e, k, s), t in trends.items():
        tag = "smoothed" if s else "raw"
        _plot_file(layout.plot(f"accuracy_exp_{e}_{k}_{tag}.txt"), days, t.series, prov,
                   "day accuracy_percent")
    for p in report.plans:
        for k in cfg.feature_kinds:
            for row in _read_json(layout.results(p.experiment_id, k))["cells"]:
                acc = [np.nan if v is None else 100.0 * v for v in row["per_class_accuracy"]]
                _plot_file(layout.plot(f"per_class_exp_{p.experiment_id}_{k}_acq_"
                                       f"{row['test_acq']:02d}.txt"),
                           range(len(acc)), acc, prov, "class accuracy_percent")
    return report
