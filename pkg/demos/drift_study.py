"""Day-over-day accuracy with and without simulated electrode drift.

Run with ``python demos/drift_study.py [OUTDIR]``. Uses a reduced setup (one
daily slot, two experiments, WL features, a 2 x 2 grid) so it finishes in
about a minute on one core; ``myorepeat run-all`` runs the full 96-cell protocol.
"""

import sys
import tempfile
from pathlib import Path

from myorepeat.config import drift_free, load_config
from myorepeat.experiment import trend_analysis
from myorepeat.pipeline import Runner

SMALL = {
    "schedule": [{"day": d, "slot": "0900", "acquisition": a}
                 for d, a in {1: 2, 2: 6, 3: 9, 4: 12}.items()],
    "plans": [
        {"experiment": 1, "training": 2, "testing": [2, 6, 9, 12], "config": "I"},
        {"experiment": 4, "training": 2, "testing": [2, 6, 9, 12], "config": "II"},
    ],
    "feature_kinds": ["WL"],
    "grid": {"c_exponents": [0, 4], "gamma_exponents": [-6, -2]},
}

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
cfg = load_config(overrides=SMALL)
for name, config in (("with drift", cfg), ("drift-free", drift_free(cfg))):
    report = Runner(config, out / name.replace(" ", "_")).run_all()
    print(f"{name}:")
    for p in report.plans:
        series = report.series(p.experiment_id, "WL")
        print(f"  experiment {p.experiment_id} (validation {p.config}): "
              + "  ".join(f"day {d} {v:5.1f}%" for d, v in enumerate(series, 1)))
    trend = trend_analysis(report)[("mean", "WL", False)]
    print(f"  day 1 minus later days: {trend.first_drop:.1f} points, plateau: {trend.plateau}")
print(f"outputs in {out}")
