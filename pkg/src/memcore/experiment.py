"""Experiment presets, the end-to-end runner, and metric computation.

An experiment trains a circuit network at desk scale (bundled digits or
synthetic correlated vectors stand in for the full-scale corpora), maps
its reference topology onto cores, produces cost reports, and writes a
reproducible artifact set: metrics.json, mse.csv, plan.json, report.csv,
a checkpoint directory, and a manifest with the config hash. Reruns with
the same config and seed are byte-identical except for the manifest's
wall clock.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .cost import report, report_for_preset, write_report_csv
from .datasets import (digits_split, inject_anomalies, one_hot_targets,
                       synthetic_correlated)
from .device import DeviceParams
from .errors import CapacityError, ConfigError
from .mapping import MESH_DEFAULT, CoreLimits, pack_cores, split_network
from .train import (NetworkCircuit, SoftwareNetwork, TrainConfig, forward_pass,
                    predict_batch, pretrain_stack, run_supervised, save_checkpoint,
                    train_autoencoder)
from .xbar import SolverConfig


@dataclass
class ExperimentConfig:
    preset: str
    seed: int = 7
    out_dir: str = "runs/latest"
    eta: float | None = None
    epochs: int | None = None
    pretrain_epochs: int | None = None
    n_train: int | None = None
    wire_resistance: float = 0.0
    solver_tolerance: float = 1e-9
    solver_max_iterations: int = 100_000
    mesh: tuple = MESH_DEFAULT
    max_inputs: int = 400
    max_neurons: int = 100
    constraint_study: bool = True
    device: dict | None = None     # DeviceParams field overrides

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mesh"] = list(self.mesh)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}",
                              module="harness")
        if "preset" not in data:
            raise ConfigError("experiment config needs a preset name", module="harness")
        kwargs = dict(data)
        if "mesh" in kwargs:
            kwargs["mesh"] = tuple(kwargs["mesh"])
        return cls(**kwargs)


@dataclass(frozen=True)
class PresetSpec:
    mode: str                 # "anomaly" | "autoencoder" | "deep" | "map_cost"
    topology: tuple           # trained topology (desk scale)
    map_topology: tuple       # topology used for the core plan / cost
    eta: float
    epochs: int
    pretrain_epochs: int
    n_train: int
    cost_app: str | None      # name in cost.APP_PRESETS, when the app is a
                              # full-scale reference


PRESETS = {
    "kdd_anomaly": PresetSpec("anomaly", (41, 15, 41), (41, 15, 41),
                              eta=0.1, epochs=20, pretrain_epochs=0,
                              n_train=1000, cost_app="kdd_anomaly"),
    "mnist_desk_autoencoder": PresetSpec("autoencoder", (784, 100, 784), (784, 100, 784),
                                         eta=0.1, epochs=8, pretrain_epochs=0,
                                         n_train=1000, cost_app=None),
    "mnist_desk_deep": PresetSpec("deep", (64, 32, 16, 10), (64, 32, 16, 10),
                                  eta=0.1, epochs=30, pretrain_epochs=10,
                                  n_train=1000, cost_app=None),
    "mnist_class": PresetSpec("map_cost", (), (784, 300, 200, 100, 10),
                              eta=0.1, epochs=0, pretrain_epochs=0,
                              n_train=0, cost_app="mnist_class"),
    # the three-hidden-layer variant of the digit classifier
    "mnist_class_small": PresetSpec("map_cost", (), (784, 200, 100, 10),
                                    eta=0.1, epochs=0, pretrain_epochs=0,
                                    n_train=0, cost_app=None),
    "isolet_class": PresetSpec("map_cost", (), (617, 2000, 1000, 500, 250, 26),
                               eta=0.1, epochs=0, pretrain_epochs=0,
                               n_train=0, cost_app="isolet_class"),
    "caltech": PresetSpec("map_cost", (), (60000, 800, 1),
                          eta=0.1, epochs=0, pretrain_epochs=0,
                          n_train=0, cost_app="caltech"),
}


@dataclass
class ExperimentResult:
    metrics: dict
    cost_rows: list            # (name, CostReport)
    artifacts: dict            # label -> path


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _write_mse_csv(path, curve) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("epoch,mse\n")
        for k, v in enumerate(curve, start=1):
            fh.write(f"{k},{v!r}\n")


def _write_grid_csv(path, rows) -> None:
    with open(path, "w", encoding="ascii") as fh:
        np.savetxt(fh, np.asarray(rows), delimiter=",", fmt="%.6g")


def _reconstruct(net: NetworkCircuit, xs, solver: SolverConfig) -> np.ndarray:
    return np.stack([forward_pass(net, x, solver)[1][-1].y for x in xs])


def _anomaly_scores(net: NetworkCircuit, xs, solver: SolverConfig) -> np.ndarray:
    recon = _reconstruct(net, xs, solver)
    return np.mean((np.asarray(xs) - recon) ** 2, axis=1)


def _plan_for(topology, cfg: ExperimentConfig):
    """Core plan plus a summary that survives mesh-capacity overflows."""
    limits = CoreLimits(cfg.max_inputs, cfg.max_neurons)
    plan = split_network(topology, limits)
    summary = {
        "original_topology": list(topology),
        "transformed_topology": plan.transformed_topology,
        "n_units": len(plan.units),
    }
    try:
        cp = pack_cores(plan, limits, cfg.mesh)
        summary.update({"n_cores": cp.n_cores, "fits_mesh": True})
        return cp, summary
    except CapacityError as exc:
        wide = pack_cores(plan, limits, (256, 256))
        summary.update({"n_cores": wide.n_cores, "fits_mesh": False,
                        "capacity_error": str(exc)})
        return wide, summary


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    if cfg.preset not in PRESETS:
        raise ConfigError(f"unknown preset {cfg.preset!r}; have {sorted(PRESETS)}",
                          module="harness")
    spec = PRESETS[cfg.preset]
    started = time.time()
    os.makedirs(cfg.out_dir, exist_ok=True)
    solver = SolverConfig(tolerance=cfg.solver_tolerance,
                          max_iterations=cfg.solver_max_iterations)
    eta = cfg.eta if cfg.eta is not None else spec.eta
    epochs = cfg.epochs if cfg.epochs is not None else spec.epochs
    pre_epochs = (cfg.pretrain_epochs if cfg.pretrain_epochs is not None
                  else spec.pretrain_epochs)
    n_train = cfg.n_train if cfg.n_train is not None else spec.n_train

    metrics: dict = {"preset": cfg.preset, "mode": spec.mode, "seed": cfg.seed}
    artifacts: dict = {}
    curve: list = []
    net: NetworkCircuit | None = None
    device_params = DeviceParams(**cfg.device) if cfg.device else None

    if spec.mode == "anomaly":
        ds = synthetic_correlated(n_train + 200, spec.topology[0], rank=5,
                                  noise=0.08, seed=cfg.seed)
        train_x, test_x = ds.features[:n_train], ds.features[n_train:]
        anomalies, _ = inject_anomalies(ds, 100, magnitude=5.0, n_perturbed=8,
                                        seed=cfg.seed + 1)
        tc = TrainConfig(eta=eta, epochs=epochs, rng_seed=cfg.seed)
        enc, dec, curve = train_autoencoder(spec.topology[0], spec.topology[1],
                                            train_x, tc, solver,
                                            params=device_params)
        net = NetworkCircuit([enc, dec])
        s_train = _anomaly_scores(net, train_x, solver)
        threshold = float(s_train.mean() + 2.0 * s_train.std())
        s_test = _anomaly_scores(net, test_x, solver)
        s_anom = _anomaly_scores(net, anomalies, solver)
        metrics.update({
            "mse_first": curve[0], "mse_final": curve[-1],
            "anomaly_threshold": threshold,
            "detection_rate": float(np.mean(s_anom > threshold)),
            "false_positive_rate": float(np.mean(s_test > threshold)),
        })

    elif spec.mode == "autoencoder":
        train, test = digits_split(n_train=n_train, upsample=spec.topology[0] == 784,
                                   seed=cfg.seed)
        tc = TrainConfig(eta=eta, epochs=epochs, rng_seed=cfg.seed)
        enc, dec, curve = train_autoencoder(spec.topology[0], spec.topology[1],
                                            train.features, tc, solver,
                                            params=device_params)
        net = NetworkCircuit([enc, dec])
        sample = test.features[:8] if len(test.features) >= 8 else train.features[:8]
        recon = _reconstruct(net, sample, solver)
        recon_mse = float(np.mean((sample - recon) ** 2))
        _write_grid_csv(os.path.join(cfg.out_dir, "recon_inputs.csv"), sample)
        _write_grid_csv(os.path.join(cfg.out_dir, "recon_outputs.csv"), recon)
        artifacts["recon_inputs"] = os.path.join(cfg.out_dir, "recon_inputs.csv")
        artifacts["recon_outputs"] = os.path.join(cfg.out_dir, "recon_outputs.csv")
        metrics.update({"mse_first": curve[0], "mse_final": curve[-1],
                        "holdout_reconstruction_mse": recon_mse})

    elif spec.mode == "deep":
        train, test = digits_split(n_train=n_train, upsample=False, seed=cfg.seed)
        targets = one_hot_targets(train.labels, spec.topology[-1])
        tc_pre = TrainConfig(eta=eta, epochs=max(pre_epochs, 1), rng_seed=cfg.seed)
        if pre_epochs > 0:
            net = pretrain_stack(spec.topology, train.features, tc_pre, solver,
                                 params=device_params)
        else:
            from .train import init_network
            net = init_network(spec.topology, cfg.seed, params=device_params)
        if epochs > 0:
            tc = TrainConfig(eta=eta, epochs=epochs, rng_seed=cfg.seed + 2)
            curve = run_supervised(net, train.features, targets, tc, solver)
            pred = predict_batch(net, test.features, solver)
            accuracy_val = accuracy(pred, test.labels)
            metrics.update({"mse_first": curve[0], "mse_final": curve[-1],
                            "accuracy": accuracy_val})
            if cfg.constraint_study:
                twin = SoftwareNetwork(spec.topology, seed=cfg.seed, weight_scale=0.2)
                twin.run(train.features, targets, eta=eta,
                         epochs=pre_epochs + epochs, seed=cfg.seed + 3)
                twin_acc = accuracy(twin.predict_batch(test.features), test.labels)
                metrics.update({
                    "unconstrained_accuracy": twin_acc,
                    "accuracy_gap": twin_acc - accuracy_val,
                })

    elif spec.mode == "map_cost":
        pass
    else:  # pragma: no cover
        raise ConfigError(f"unknown mode {spec.mode!r}", module="harness")

    # Core plan and cost reports for the reference topology.
    cp, plan_summary = _plan_for(spec.map_topology, cfg)
    plan_path = os.path.join(cfg.out_dir, "plan.json")
    cp.save_json(plan_path)
    artifacts["plan"] = plan_path
    metrics["plan"] = plan_summary

    cost_rows = []
    if spec.cost_app:
        cost_rows.append((spec.cost_app + "_training",
                          report_for_preset(spec.cost_app, "training")))
        cost_rows.append((spec.cost_app + "_recognition",
                          report_for_preset(spec.cost_app, "recognition")))
    n_layers = max(len(spec.map_topology) - 1, 1)
    cost_rows.append((cfg.preset + "_mapped_training",
                      report("training", plan_summary["n_cores"], n_layers,
                             io_bits=spec.map_topology[0] * 8)))
    cost_rows.append((cfg.preset + "_mapped_recognition",
                      report("recognition", plan_summary["n_cores"], n_layers,
                             io_bits=spec.map_topology[0] * 8)))
    report_path = os.path.join(cfg.out_dir, "report.csv")
    write_report_csv(cost_rows, report_path)
    artifacts["report"] = report_path
    metrics["cost"] = {name: rep.to_dict() for name, rep in cost_rows}

    if curve:
        mse_path = os.path.join(cfg.out_dir, "mse.csv")
        _write_mse_csv(mse_path, curve)
        artifacts["mse"] = mse_path
        metrics["mse_curve"] = [float(v) for v in curve]
    if net is not None:
        ckpt = os.path.join(cfg.out_dir, "checkpoint")
        save_checkpoint(net, ckpt, extra={"preset": cfg.preset, "seed": cfg.seed})
        artifacts["checkpoint"] = ckpt

    metrics_path = os.path.join(cfg.out_dir, "metrics.json")
    _write_json(metrics_path, metrics)
    artifacts["metrics"] = metrics_path

    manifest = {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "package_version": __version__,
        "numpy_version": np.__version__,
        "wall_clock_s": time.time() - started,
    }
    manifest_path = os.path.join(cfg.out_dir, "manifest.json")
    _write_json(manifest_path, manifest)
    artifacts["manifest"] = manifest_path

    return ExperimentResult(metrics=metrics, cost_rows=cost_rows, artifacts=artifacts)


def accuracy(predictions, labels) -> float:
    """Argmax-match fraction for classification outputs."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(predictions) != len(labels):
        raise ConfigError(
            f"got {len(predictions)} predictions for {len(labels)} labels",
            module="harness")
    if predictions.ndim != 2:
        raise ConfigError("predictions must be (n_samples, n_classes)", module="harness")
    return float(np.mean(np.argmax(predictions, axis=1) == labels))
