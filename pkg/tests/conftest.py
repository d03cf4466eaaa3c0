import sys
from pathlib import Path

# make the shared oracles importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))


def small_config_dict():
    """One slot over four days, two experiments, WL only and a 2 x 2 grid."""
    ids = {1: 2, 2: 6, 3: 9, 4: 12}
    return {
        "schedule": [{"day": d, "slot": "0900", "acquisition": a} for d, a in ids.items()],
        "plans": [
            {"experiment": 1, "training": 2, "testing": [2, 6, 9, 12], "config": "I"},
            {"experiment": 4, "training": 2, "testing": [2, 6, 9, 12], "config": "II"},
        ],
        "feature_kinds": ["WL"],
        "grid": {"c_exponents": [0, 4], "gamma_exponents": [-6, -2]},
    }


def pytest_terminal_summary(terminalreporter):
    """Print the one-line outcome of every acceptance criterion that ran."""
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: (int(k.split()[0]), k)):
        terminalreporter.write_line(results[key])
