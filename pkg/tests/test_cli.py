"""Command-line pipeline on a small configuration: stages, provenance, resumption."""

import json
import subprocess
import sys

import pytest

from myorepeat.cli import main
from myorepeat.config import load_config

from conftest import small_config_dict


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.json"
    path.write_text(json.dumps(small_config_dict()))
    return path


@pytest.fixture(scope="module")
def finished(tmp_path_factory, config_path):
    out = tmp_path_factory.mktemp("run")
    assert main(["run-all", "--config", str(config_path), "--out", str(out)]) == 0
    return out


def test_run_all_outputs(finished, config_path):
    cfg = load_config(config_path)
    for rel in ("corpus/acq_02.csv", "preprocessed/acq_12.csv", "features/acq_06_WL.csv",
                "grid/train_02_WL_g-6.npz", "models/exp_4_WL.json", "results/exp_1_WL.json",
                "confusion/exp_1_WL_acq_09_counts.csv", "confusion/exp_1_WL_acq_09_normalized.csv",
                "reports/report.csv", "reports/report_movements.csv", "reports/report.json",
                "reports/trends.json", "plots/accuracy_exp_mean_WL_raw.txt",
                "plots/per_class_exp_4_WL_acq_12.txt"):
        assert (finished / rel).exists(), rel
    lines = (finished / "reports/report.csv").read_text().splitlines()
    assert lines[:2] == [f"# config_hash={cfg.config_hash()}", f"# seed={cfg.seed}"]
    assert len(lines) == 3 + 2 * 4
    assert lines[3].startswith("1,1,2,2+6+9+12,2,1,")
    assert lines[-1].startswith("2,4,2,2,12,4,")


def test_text_outputs_carry_provenance(finished, config_path):
    cfg = load_config(config_path)
    stamp = f"config_hash={cfg.config_hash()}"
    for path in finished.rglob("*"):
        if path.suffix in (".csv", ".txt"):
            assert stamp in path.read_text().split("\n", 2)[0], path
        elif path.suffix == ".json" and path.parent.name in ("models", "results", "reports"):
            assert json.loads(path.read_text())["provenance"]["config_hash"] == cfg.config_hash()


def test_model_records_choice(finished):
    stored = json.loads((finished / "models/exp_1_WL.json").read_text())
    assert stored["C"] in (1.0, 16.0) and stored["gamma"] in (2.0**-6, 2.0**-2)
    assert len(stored["model"]["binaries"]) == 153
    report = json.loads((finished / "reports/report.json").read_text())
    assert len(report["cells"]) == 8
    assert all(c["accuracy_smoothed"] >= c["accuracy"] for c in report["cells"])


def test_second_run_is_idle(finished, config_path, capsys):
    assert main(["run-all", "--config", str(config_path), "--out", str(finished)]) == 0
    assert "0 job(s) run" in capsys.readouterr().out


def test_changed_seed_reruns_everything(finished, config_path, tmp_path, capsys):
    assert main(["synth", "--config", str(config_path), "--out", str(tmp_path),
                 "--seed", "5"]) == 0
    assert "4 job(s) run" in capsys.readouterr().out


def test_evaluate_before_train(config_path, tmp_path, capsys):
    assert main(["evaluate", "--config", str(config_path), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "evaluate" in err and "models/exp_1_WL.json" in err


def test_stage_subsets(config_path, tmp_path):
    args = ["--config", str(config_path), "--out", str(tmp_path)]
    assert main(["synth"] + args) == 0
    assert main(["preprocess", "--acq", "2"] + args) == 0
    assert (tmp_path / "preprocessed/acq_02.csv").exists()
    assert not (tmp_path / "preprocessed/acq_06.csv").exists()
    assert main(["train", "--experiment", "7"] + args) == 1


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"grid": {"c_exponents": []}}))
    assert main(["run-all", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "grid.c_exponents" in capsys.readouterr().err


def test_show_config(capsys):
    assert main(["show-config", "--seed", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 3


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "myorepeat", "--help"], capture_output=True,
                          text=True, check=True)
    for cmd in ("synth", "preprocess", "features", "train", "evaluate", "run-all", "report"):
        assert cmd in done.stdout
