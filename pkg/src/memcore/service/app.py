"""HTTP service wrapping the simulator.

Every CLI subcommand has a matching endpoint; domain errors come back as
HTTP 400 with a structured body carrying the error kind so thin clients
can map them to exit codes.
"""

from __future__ import annotations

import time

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..cost import CSV_HEADER, report, report_for_preset, report_table
from ..device import DeviceParams, MemristorState, apply_pulse, small_signal_resistance
from ..errors import MemcoreError
from ..experiment import ExperimentConfig, PRESETS, run_experiment
from ..mapping import CoreLimits, pack_cores, split_network
from ..xbar import Crossbar, CrossbarGeometry, SolverConfig, solve_dense, solve_jacobi
from . import schemas as S


def create_app() -> FastAPI:
    app = FastAPI(title="memcore", version=__version__,
                  description="Memristor crossbar neural core simulator")

    @app.exception_handler(MemcoreError)
    async def domain_error_handler(_request, exc: MemcoreError):
        return JSONResponse(
            status_code=400,
            content={"error": {"kind": exc.kind, "module": exc.module,
                               "message": str(exc)}})

    @app.get("/health", response_model=S.HealthResponse)
    def health():
        return S.HealthResponse(status="ok", version=__version__)

    @app.post("/device/sim", response_model=S.DeviceSimResponse)
    def device_sim(req: S.DeviceSimRequest):
        params = DeviceParams(**req.params.model_dump()) if req.params else DeviceParams()
        state = MemristorState(x=req.x0)
        r_before = small_signal_resistance(params, state.x)
        trace = []
        if req.trace_points > 0 and req.duration_s > 0:
            ts = np.linspace(0.0, req.duration_s, req.trace_points + 1)
            s = state
            trace.append([0.0, s.x])
            for t0, t1 in zip(ts, ts[1:]):
                s = apply_pulse(params, s, req.voltage, t1 - t0, req.dt_s)
                trace.append([float(t1), s.x])
            final = s
        else:
            final = apply_pulse(params, state, req.voltage, req.duration_s, req.dt_s)
        return S.DeviceSimResponse(
            x_final=final.x,
            resistance_before_ohm=r_before,
            resistance_after_ohm=small_signal_resistance(params, final.x),
            trace=trace)

    def _build_crossbar(req: S.XbarSolveRequest) -> Crossbar:
        if req.states is not None:
            grid = np.asarray(req.states, dtype=float)
        else:
            rng = np.random.default_rng(req.state_seed or 0)
            grid = rng.uniform(req.state_range[0], req.state_range[1],
                               (req.rows, req.cols))
        return Crossbar(CrossbarGeometry(req.rows, req.cols, req.wire_resistance), grid)

    @app.post("/xbar/solve", response_model=S.XbarSolveResponse)
    def xbar_solve(req: S.XbarSolveRequest):
        xb = _build_crossbar(req)
        if req.method == "dense":
            sol = solve_dense(xb, req.inputs)
        else:
            sol = solve_jacobi(xb, req.inputs,
                               SolverConfig(req.tolerance, req.max_iterations,
                                            req.conduction_mode))
        resp = S.XbarSolveResponse(column_currents=sol.column_currents.tolist(),
                                   iterations=sol.iterations, residual=sol.residual)
        if req.include_node_voltages:
            resp.row_node_voltages = sol.row_node_voltages.tolist()
            resp.col_node_voltages = sol.col_node_voltages.tolist()
        return resp

    @app.post("/xbar/bench", response_model=S.XbarBenchResponse)
    def xbar_bench(req: S.XbarBenchRequest):
        rng = np.random.default_rng(req.seed)
        cases = []
        worst = 0.0
        for rows, cols in req.sizes:
            for rw in req.wire_resistances:
                dev_case = 0.0
                iters = 0
                t0 = time.perf_counter()
                for _ in range(req.trials):
                    grid = rng.uniform(0.001, 1.0, (rows, cols))
                    xb = Crossbar(CrossbarGeometry(rows, cols, rw), grid)
                    v = rng.uniform(-0.5, 0.5, rows)
                    sj = solve_jacobi(xb, v, SolverConfig(req.tolerance,
                                                          req.max_iterations))
                    sd = solve_dense(xb, v)
                    scale = float(np.max(np.abs(sd.column_currents)))
                    dev = float(np.max(np.abs(sj.column_currents - sd.column_currents)))
                    dev_case = max(dev_case, dev / scale if scale else 0.0)
                    iters = max(iters, sj.iterations)
                cases.append(S.XbarBenchCase(
                    rows=rows, cols=cols, wire_resistance=rw,
                    max_rel_deviation=dev_case, iterations=iters,
                    seconds=time.perf_counter() - t0))
                worst = max(worst, dev_case)
        return S.XbarBenchResponse(cases=cases, worst_rel_deviation=worst)

    @app.post("/map")
    def map_network(req: S.MapRequest):
        limits = CoreLimits(req.max_inputs, req.max_neurons)
        plan = split_network(req.topology, limits)
        cp = pack_cores(plan, limits, tuple(req.mesh))
        return cp.to_dict()

    @app.post("/cost", response_model=S.CostResponse)
    def cost(req: S.CostRequest):
        if req.preset:
            rep = report_for_preset(req.preset, req.phase)
        else:
            rep = report(req.phase, req.n_cores or 0, req.n_layers or 1,
                         io_bits=req.io_bits, io_energy_j=req.io_energy_j,
                         route_overhead=req.route_overhead_s)
        return S.CostResponse(**rep.to_dict())

    @app.post("/report", response_model=S.ReportResponse)
    def report_all(req: S.ReportRequest):
        rows = report_table(req.phase, names=req.presets)
        return S.ReportResponse(
            header=CSV_HEADER,
            rows=[rep.to_csv_row(name) for name, rep in rows],
            reports={name: rep.to_dict() for name, rep in rows})

    def _run(req: S.TrainRequest) -> S.RunResponse:
        cfg = ExperimentConfig(preset=req.preset, seed=req.seed, out_dir=req.out_dir,
                               eta=req.eta, epochs=req.epochs,
                               pretrain_epochs=req.pretrain_epochs,
                               n_train=req.n_train,
                               constraint_study=req.constraint_study,
                               device=req.device)
        result = run_experiment(cfg)
        return S.RunResponse(metrics=result.metrics, artifacts=result.artifacts)

    @app.post("/train", response_model=S.RunResponse)
    def train(req: S.TrainRequest):
        return _run(req)

    @app.post("/pretrain", response_model=S.RunResponse)
    def pretrain(req: S.TrainRequest):
        # Unsupervised stage only: deep presets skip the supervised
        # fine-tune; autoencoder and anomaly presets already are their
        # own pretraining.
        if req.preset in PRESETS and PRESETS[req.preset].mode == "deep":
            req = req.model_copy(update={"epochs": 0})
        return _run(req)

    @app.post("/run", response_model=S.RunResponse)
    def run(req: S.TrainRequest):
        return _run(req)

    return app


app = create_app()
