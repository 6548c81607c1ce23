import json
import os

import numpy as np
import pytest

from memcore.errors import ConfigError
from memcore.experiment import (ExperimentConfig, PRESETS, accuracy, config_hash,
                                run_experiment)


def test_accuracy_basics():
    preds = np.array([[0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, -0.5]])
    assert accuracy(preds, np.array([0, 1, 0, 0])) == 1.0
    assert accuracy(preds, np.array([1, 0, 1, 1])) == 0.0
    assert accuracy(preds, np.array([0, 1, 0, 1])) == 0.75
    with pytest.raises(ConfigError):
        accuracy(preds, np.array([0, 1]))


def test_config_round_trip_and_validation():
    cfg = ExperimentConfig(preset="kdd_anomaly", seed=3)
    back = ExperimentConfig.from_dict(cfg.to_dict())
    assert back == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"preset": "kdd_anomaly", "bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": 1})
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(preset="nope"))


def test_presets_exist():
    assert {"kdd_anomaly", "mnist_desk_autoencoder", "mnist_desk_deep",
            "mnist_class", "isolet_class", "caltech"} <= set(PRESETS)


def test_anomaly_experiment_artifacts(tmp_path):
    cfg = ExperimentConfig(preset="kdd_anomaly", seed=5, out_dir=str(tmp_path / "run"),
                           epochs=4, n_train=200)
    result = run_experiment(cfg)
    for label in ("metrics", "mse", "plan", "report", "manifest", "checkpoint"):
        assert label in result.artifacts
        assert os.path.exists(result.artifacts[label])
    metrics = json.loads(open(result.artifacts["metrics"]).read())
    assert metrics["preset"] == "kdd_anomaly"
    assert 0.0 <= metrics["false_positive_rate"] <= 1.0
    assert 0.0 <= metrics["detection_rate"] <= 1.0
    assert metrics["plan"]["n_cores"] == 1
    report_text = open(result.artifacts["report"]).read()
    assert "kdd_anomaly_training" in report_text
    mse_lines = open(result.artifacts["mse"]).read().strip().splitlines()
    assert mse_lines[0] == "epoch,mse"
    assert len(mse_lines) == 5


def test_experiment_reproducibility(tmp_path):
    runs = []
    for name in ("a", "b"):
        cfg = ExperimentConfig(preset="kdd_anomaly", seed=11,
                               out_dir=str(tmp_path / name), epochs=3, n_train=150)
        runs.append(run_experiment(cfg))
    m0 = open(runs[0].artifacts["metrics"], "rb").read()
    m1 = open(runs[1].artifacts["metrics"], "rb").read()
    assert m0 == m1
    ck0 = sorted(os.listdir(runs[0].artifacts["checkpoint"]))
    ck1 = sorted(os.listdir(runs[1].artifacts["checkpoint"]))
    assert ck0 == ck1
    for name in ck0:
        a = open(os.path.join(runs[0].artifacts["checkpoint"], name), "rb").read()
        b = open(os.path.join(runs[1].artifacts["checkpoint"], name), "rb").read()
        assert a == b
    h0 = json.loads(open(runs[0].artifacts["manifest"]).read())["config_hash"]
    h1 = json.loads(open(runs[1].artifacts["manifest"]).read())["config_hash"]
    assert h0 != h1   # out_dir differs, so the hashes differ
    cfg_same = ExperimentConfig(preset="kdd_anomaly", seed=11, out_dir="x")
    assert config_hash(cfg_same) == config_hash(ExperimentConfig(
        preset="kdd_anomaly", seed=11, out_dir="x"))


def test_map_cost_preset_mnist(tmp_path):
    cfg = ExperimentConfig(preset="mnist_class", out_dir=str(tmp_path / "mc"))
    result = run_experiment(cfg)
    names = [name for name, _ in result.cost_rows]
    assert "mnist_class_training" in names
    assert "mnist_class_recognition" in names
    assert "mnist_class_mapped_training" in names
    ref = dict(result.cost_rows)["mnist_class_training"]
    assert ref.n_cores == 57
    assert ref.compute_energy == pytest.approx(4.18e-7, rel=0.01)
    assert result.metrics["plan"]["fits_mesh"] is True


def test_map_cost_preset_caltech_overflows_default_mesh(tmp_path):
    cfg = ExperimentConfig(preset="caltech", out_dir=str(tmp_path / "ct"))
    result = run_experiment(cfg)
    assert result.metrics["plan"]["fits_mesh"] is False
    assert result.metrics["plan"]["n_cores"] > 576
    ref = dict(result.cost_rows)["caltech_recognition"]
    assert ref.n_cores == 572
    assert ref.compute_energy == pytest.approx(1.42038e-7, rel=0.005)


def test_deep_experiment_reports_constraint_study(tmp_path):
    # miniature run: the accuracy numbers are meaningless at this size,
    # only the paired-study structure is under test
    cfg = ExperimentConfig(preset="mnist_desk_deep", seed=3,
                           out_dir=str(tmp_path / "deep"),
                           epochs=2, pretrain_epochs=1, n_train=80)
    result = run_experiment(cfg)
    m = result.metrics
    assert {"accuracy", "unconstrained_accuracy", "accuracy_gap"} <= set(m)
    assert m["accuracy_gap"] == pytest.approx(
        m["unconstrained_accuracy"] - m["accuracy"], abs=1e-12)
    assert m["mse_final"] > 0.0


def test_autoencoder_experiment_writes_reconstructions(tmp_path):
    cfg = ExperimentConfig(preset="mnist_desk_autoencoder", seed=2,
                           out_dir=str(tmp_path / "ae"), epochs=1, n_train=60)
    result = run_experiment(cfg)
    inputs = np.loadtxt(result.artifacts["recon_inputs"], delimiter=",")
    outputs = np.loadtxt(result.artifacts["recon_outputs"], delimiter=",")
    assert inputs.shape == outputs.shape == (8, 784)
    assert result.metrics["holdout_reconstruction_mse"] >= 0.0
