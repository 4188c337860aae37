import json

import numpy as np
import pytest

from corrdp.cli import main
from corrdp.dataset import load_csv
from corrdp.harness import ExperimentConfig
from corrdp.importance import ForestConfig
from corrdp.learners import TrainConfig
from corrdp.selection import SelectionConfig


def write_config(tmp_path, out_dir):
    cfg = ExperimentConfig(
        synthetic=dict(n_clusters=6, correlation=0.9, n_records=60, n_features=8,
                       seed=2, independent_features=2),
        selection=SelectionConfig(collinearity_threshold=0.95, importance_coverage=0.999,
                                  record_threshold=0.8, sensitivity_mode="bound",
                                  noise_repeats=2),
        forest=ForestConfig(n_trees=8),
        train=TrainConfig(epochs=100),
        epsilons=(0.5,),
        seeds=(0,),
        n_count_queries=4,
        n_mean_queries=4,
        out_dir=str(out_dir),
    )
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg.to_dict()), encoding="utf-8")
    return path


def test_synth_writes_loadable_csv(tmp_path, capsys):
    out = tmp_path / "synth.csv"
    code = main([
        "synth", "--out", str(out), "--records", "20", "--features", "5",
        "--clusters", "4", "--correlation", "0.8", "--independent", "1", "--seed", "3",
    ])
    assert code == 0
    ds = load_csv(out, "label")
    assert ds.n_records == 20
    assert ds.n_features == 5


def test_sensitivity_command(tmp_path, capsys):
    out = tmp_path / "synth.csv"
    main([
        "synth", "--out", str(out), "--records", "12", "--features", "4",
        "--clusters", "3", "--correlation", "1.0", "--seed", "0",
    ])
    capsys.readouterr()
    code = main([
        "sensitivity", "--data", str(out), "--label-column", "label",
        "--kind", "count", "--feature", "f00", "--op", ">=", "--value", "0.0",
        "--theta0", "0.9",
    ])
    captured = capsys.readouterr()
    assert code == 0
    lines = dict(line.split(": ") for line in captured.out.strip().splitlines())
    assert float(lines["correlated_sensitivity"]) <= float(lines["group_sensitivity"])


def test_run_and_query_commands(tmp_path, capsys):
    out_dir = tmp_path / "results"
    config = write_config(tmp_path, out_dir)
    assert main(["run", "--config", str(config)]) == 0
    captured = capsys.readouterr()
    assert (out_dir / "accuracy.csv").exists()
    assert "accuracy" in captured.out

    qdir = tmp_path / "queries"
    assert main(["query", "--config", str(config), "--out-dir", str(qdir),
                 "--scheme", "crfs"]) == 0
    captured = capsys.readouterr()
    assert (qdir / "queries.csv").exists()
    assert "crfs" in captured.out


def test_select_command(tmp_path, capsys):
    config = write_config(tmp_path, tmp_path / "unused")
    assert main(["select", "--config", str(config), "--epsilon", "1.0"]) == 0
    traces = json.loads(capsys.readouterr().out)
    assert traces[0]["epsilon"] == 1.0
    assert traces[0]["best"]


def test_bad_config_exits_nonzero(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"synthetic": None}), encoding="utf-8")
    code = main(["run", "--config", str(path)])
    assert code != 0
    assert capsys.readouterr().err.strip()


def test_missing_dataset_reports_stage(tmp_path, capsys):
    cfg = {
        "csv_path": str(tmp_path / "absent.csv"),
        "label_column": "y",
        "epsilons": [0.5],
        "seeds": [0],
        "out_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    code = main(["run", "--config", str(path)])
    err = capsys.readouterr().err
    assert code == 2
    assert "[load]" in err
