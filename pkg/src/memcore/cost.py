"""Calibrated timing, energy, and area model of the multicore system.

Per-core step costs come from circuit-level characterization of a single
400x100 neural core; system numbers compose linearly over active cores.
Per-application I/O energies are not derivable from the raw 0.05 pJ/bit
figure times feature bits, so application presets carry a calibrated I/O
constant and the raw bit model is reported alongside.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class CostTables:
    t_fwd: float = 0.27e-6            # s, forward pass (recognition step)
    t_bwd: float = 0.80e-6            # s, backward pass
    t_upd: float = 1.00e-6            # s, weight update
    p_fwd: float = 0.794e-3           # W
    p_bwd: float = 0.706e-3           # W
    p_upd: float = 6.513e-3           # W
    p_ctrl: float = 0.0004e-3         # W, control unit
    io_bit: float = 0.05e-12          # J/bit through-silicon-via transfer
    route_clock: float = 200e6        # Hz
    xbar_latency: float = 20e-9       # s, raw crossbar settling
    core_area: float = 0.0163         # mm^2 per neural core
    risc_area: float = 0.52           # mm^2, configuration processor
    residual_area: float = 0.031      # mm^2, DMA + buffers
    recog_core_energy: float = 2.48e-10   # J per core per input, periphery included
    recog_pipeline_overhead: float = 0.5e-6  # s, routing/buffering per input

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ConfigError(f"CostTables.{name} must be >= 0, got {value}",
                                  module="cost")


@dataclass
class CostReport:
    phase: str                 # "training" | "recognition"
    n_cores: int
    time_per_input: float      # s
    compute_energy: float      # J
    io_energy: float           # J
    total_energy: float        # J
    area: float                # mm^2
    io_energy_raw_bits: float | None = None   # raw bit model, when available
    latency_reference: float | None = None    # externally reported latency, if any
    latency_flag: str | None = None

    def to_dict(self) -> dict:
        out = {
            "phase": self.phase,
            "n_cores": self.n_cores,
            "time_per_input_s": self.time_per_input,
            "compute_energy_j": self.compute_energy,
            "io_energy_j": self.io_energy,
            "total_energy_j": self.total_energy,
            "area_mm2": self.area,
        }
        if self.io_energy_raw_bits is not None:
            out["io_energy_raw_bit_model_j"] = self.io_energy_raw_bits
        if self.latency_reference is not None:
            out["latency_reference_s"] = self.latency_reference
        if self.latency_flag:
            out["latency_flag"] = self.latency_flag
        return out

    def to_csv_row(self, name: str = "") -> str:
        return (f"{name},{self.phase},{self.n_cores},{self.time_per_input * 1e6:.6g},"
                f"{self.compute_energy:.6g},{self.io_energy:.6g},{self.total_energy:.6g}")


CSV_HEADER = "application,phase,n_cores,time_us,compute_energy_j,io_energy_j,total_energy_j"


def training_compute_energy(n_cores: int, tables: CostTables | None = None) -> float:
    """Each active core runs one forward, one backward, one update per
    training input."""
    tables = tables or CostTables()
    if n_cores < 0:
        raise ConfigError("core count must be >= 0", module="cost")
    per_core = (tables.t_fwd * tables.p_fwd + tables.t_bwd * tables.p_bwd
                + tables.t_upd * tables.p_upd)
    return n_cores * per_core


def recognition_compute_energy(n_cores: int, tables: CostTables | None = None) -> float:
    tables = tables or CostTables()
    if n_cores < 0:
        raise ConfigError("core count must be >= 0", module="cost")
    return n_cores * tables.recog_core_energy


def training_latency(n_layers: int, tables: CostTables | None = None,
                     route_overhead: float = 0.0) -> float:
    """Pipeline stages run in sequence per training input."""
    tables = tables or CostTables()
    if n_layers < 1:
        raise ConfigError("latency needs n_layers >= 1", module="cost")
    return n_layers * (tables.t_fwd + tables.t_bwd + tables.t_upd) + route_overhead


def recognition_latency(tables: CostTables | None = None) -> float:
    """Pipelined throughput interval per input."""
    tables = tables or CostTables()
    return tables.t_fwd + tables.recog_pipeline_overhead


def io_energy(bits: int, tables: CostTables | None = None) -> float:
    tables = tables or CostTables()
    if bits < 0:
        raise ConfigError("bit count must be >= 0", module="cost")
    return bits * tables.io_bit


def area_estimate(n_cores: int, tables: CostTables | None = None) -> float:
    tables = tables or CostTables()
    if n_cores < 0:
        raise ConfigError("core count must be >= 0", module="cost")
    return n_cores * tables.core_area + tables.risc_area + tables.residual_area


@dataclass(frozen=True)
class AppCostPreset:
    """Per-application constants for system-level reports."""

    name: str
    topology: tuple
    n_cores: int               # reported core count for the full-scale app
    io_energy_j: float         # calibrated per-input I/O energy
    train_time_ref_s: float    # reported training latency per input
    input_bits: int            # raw bit model: features * 8-bit codes

    @property
    def n_layers(self) -> int:
        return len(self.topology) - 1


APP_PRESETS = {
    "mnist_class": AppCostPreset("mnist_class", (784, 300, 200, 100, 10), 57,
                                 8.43e-9, 7.29e-6, 784 * 8),
    "isolet_class": AppCostPreset("isolet_class", (617, 2000, 1000, 500, 250, 26), 132,
                                  2.66e-8, 8.86e-6, 617 * 8),
    "kdd_anomaly": AppCostPreset("kdd_anomaly", (41, 15, 41), 1,
                                 4.47e-9, 4.15e-6, 41 * 8),
    "caltech": AppCostPreset("caltech", (60000, 800, 1), 572,
                             5.29e-8, 5.7175e-6, 60000 * 8),
}


def report(phase: str, n_cores: int, n_layers: int,
           tables: CostTables | None = None,
           io_energy_j: float | None = None,
           io_bits: int | None = None,
           route_overhead: float = 0.0,
           latency_reference: float | None = None) -> CostReport:
    """Assemble a full per-input report from core count and pipeline depth.

    io_energy_j takes precedence as the calibrated per-input I/O energy;
    io_bits feeds the raw bit model (also reported when both are given).
    """
    tables = tables or CostTables()
    if phase not in ("training", "recognition"):
        raise ConfigError(f"unknown phase {phase!r}", module="cost")
    raw_io = io_energy(io_bits, tables) if io_bits is not None else None
    io_j = io_energy_j if io_energy_j is not None else (raw_io or 0.0)
    if phase == "training":
        compute = training_compute_energy(n_cores, tables)
        latency = training_latency(n_layers, tables, route_overhead)
    else:
        compute = recognition_compute_energy(n_cores, tables)
        latency = recognition_latency(tables)
    flag = None
    if latency_reference is not None and latency_reference > 0:
        gap = abs(latency - latency_reference) / latency_reference
        if gap > 0.01:
            flag = (f"model latency {latency * 1e6:.4g} us differs from the reported "
                    f"{latency_reference * 1e6:.4g} us by {gap * 100:.1f}%; "
                    "route overhead is a free parameter here")
    return CostReport(phase=phase, n_cores=n_cores, time_per_input=latency,
                      compute_energy=compute, io_energy=io_j,
                      total_energy=compute + io_j, area=area_estimate(n_cores, tables),
                      io_energy_raw_bits=raw_io,
                      latency_reference=latency_reference if phase == "training" else None,
                      latency_flag=flag)


def report_for_preset(name: str, phase: str,
                      tables: CostTables | None = None) -> CostReport:
    if name not in APP_PRESETS:
        raise ConfigError(f"unknown application preset {name!r}; "
                          f"have {sorted(APP_PRESETS)}", module="cost")
    p = APP_PRESETS[name]
    return report(phase, p.n_cores, p.n_layers, tables,
                  io_energy_j=p.io_energy_j, io_bits=p.input_bits,
                  latency_reference=p.train_time_ref_s if phase == "training" else None)


def report_table(phase: str, tables: CostTables | None = None,
                 names=None) -> list:
    names = names or sorted(APP_PRESETS)
    return [(name, report_for_preset(name, phase, tables)) for name in names]


def write_report_csv(rows, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(CSV_HEADER + "\n")
        for name, rep in rows:
            fh.write(rep.to_csv_row(name) + "\n")


def report_to_json(rows) -> str:
    return json.dumps({name: rep.to_dict() for name, rep in rows}, indent=2, sort_keys=True)
