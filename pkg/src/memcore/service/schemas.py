"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class DeviceParamsModel(BaseModel):
    vp: float = 1.3
    vn: float = 1.3
    ap: float = 5800.0
    an: float = 5800.0
    xp: float = 0.9995
    xn: float = 0.9995
    alpha_p: float = 3.0
    alpha_n: float = 3.0
    a1: float = 0.002
    a2: float = 0.002
    b: float = 0.05
    x0: float = 0.001


class DeviceSimRequest(BaseModel):
    params: DeviceParamsModel | None = None
    x0: float = 0.001
    voltage: float
    duration_s: float
    dt_s: float = 1e-8
    trace_points: int = Field(0, ge=0, le=10_000)


class DeviceSimResponse(BaseModel):
    x_final: float
    resistance_before_ohm: float
    resistance_after_ohm: float
    trace: list[list[float]] = []      # [t_s, x] pairs when requested


class XbarSolveRequest(BaseModel):
    rows: int = Field(..., ge=1)
    cols: int = Field(..., ge=1)
    wire_resistance: float = 1.5
    states: list[list[float]] | None = None   # row-major x grid
    state_seed: int | None = None              # random grid when states omitted
    state_range: tuple[float, float] = (0.001, 0.01)
    inputs: list[float]
    tolerance: float = 1e-9
    max_iterations: int = 100_000
    conduction_mode: str = "linearized"
    method: str = "jacobi"                     # or "dense"
    include_node_voltages: bool = False


class XbarSolveResponse(BaseModel):
    column_currents: list[float]
    iterations: int
    residual: float
    row_node_voltages: list[list[float]] | None = None
    col_node_voltages: list[list[float]] | None = None


class XbarBenchRequest(BaseModel):
    sizes: list[tuple[int, int]] = [(8, 8), (16, 16), (32, 32)]
    wire_resistances: list[float] = [0.0, 1.5, 15.0]
    trials: int = Field(3, ge=1, le=50)
    seed: int = 0
    tolerance: float = 1e-12
    max_iterations: int = 400_000


class XbarBenchCase(BaseModel):
    rows: int
    cols: int
    wire_resistance: float
    max_rel_deviation: float
    iterations: int
    seconds: float


class XbarBenchResponse(BaseModel):
    cases: list[XbarBenchCase]
    worst_rel_deviation: float


class MapRequest(BaseModel):
    topology: list[int]
    max_inputs: int = 400
    max_neurons: int = 100
    mesh: tuple[int, int] = (24, 24)


class CostRequest(BaseModel):
    phase: str                                # "training" | "recognition"
    preset: str | None = None                 # full-scale application preset
    n_cores: int | None = None
    n_layers: int | None = None
    io_bits: int | None = None
    io_energy_j: float | None = None
    route_overhead_s: float = 0.0


class CostResponse(BaseModel):
    phase: str
    n_cores: int
    time_per_input_s: float
    compute_energy_j: float
    io_energy_j: float
    total_energy_j: float
    area_mm2: float
    io_energy_raw_bit_model_j: float | None = None
    latency_reference_s: float | None = None
    latency_flag: str | None = None


class TrainRequest(BaseModel):
    preset: str
    seed: int = 7
    out_dir: str = "runs/latest"
    eta: float | None = None
    epochs: int | None = None
    pretrain_epochs: int | None = None
    n_train: int | None = None
    constraint_study: bool = True
    device: dict | None = None      # DeviceParams field overrides


class RunResponse(BaseModel):
    metrics: dict
    artifacts: dict


class ReportRequest(BaseModel):
    phase: str = "training"
    presets: list[str] | None = None


class ReportResponse(BaseModel):
    header: str
    rows: list[str]
    reports: dict


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorBody(BaseModel):
    kind: str
    module: str
    message: str
