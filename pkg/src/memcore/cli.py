"""Command-line client for the simulator service.

Every subcommand marshals its arguments into the corresponding service
request. By default the service runs in-process; --server points the same
commands at a remote instance. Exit codes: 0 success, 2 config error,
3 convergence error, 4 capacity error, 5 format error.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .errors import exit_code_for

CONFIG_ENV_VAR = "MEMCORE_CONFIG"


class ServiceClient:
    """Thin HTTP client; in-process ASGI transport unless a server URL is
    given."""

    def __init__(self, server: str | None = None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DeprecationWarning)
                from fastapi.testclient import TestClient

            from .service.app import create_app

            self._client = TestClient(create_app(), raise_server_exceptions=False)

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        return self._handle(resp)

    def get(self, path: str) -> dict:
        return self._handle(self._client.get(path))

    @staticmethod
    def _handle(resp) -> dict:
        if resp.status_code == 200:
            return resp.json()
        try:
            body = resp.json()
        except Exception:
            body = {}
        if "error" in body:
            err = body["error"]
            click.echo(f"error ({err['kind']}, {err['module']}): {err['message']}",
                       err=True)
            sys.exit(exit_code_for(err["kind"]))
        if resp.status_code == 422:
            click.echo(f"error (config): invalid request: {body.get('detail')}", err=True)
            sys.exit(exit_code_for("config"))
        click.echo(f"error: HTTP {resp.status_code}: {resp.text[:500]}", err=True)
        sys.exit(1)


def _load_config(path: str | None) -> dict:
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        click.echo(f"error (config): config file not found: {path}", err=True)
        sys.exit(exit_code_for("config"))
    except json.JSONDecodeError as exc:
        click.echo(f"error (format): config file is not valid JSON: {exc}", err=True)
        sys.exit(exit_code_for("format"))
    if not isinstance(data, dict):
        click.echo("error (config): config file must hold a JSON object", err=True)
        sys.exit(exit_code_for("config"))
    return data


def _emit(payload: dict, out_path: str | None = None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w", encoding="ascii") as fh:
            fh.write(text + "\n")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


def _parse_floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        click.echo(f"error (config): cannot parse float list {text!r}", err=True)
        sys.exit(exit_code_for("config"))


@click.group()
@click.option("--server", default=None, help="Remote service URL (default: in-process).")
@click.option("--config", "config_path", default=None, type=click.Path(),
              help=f"JSON config file (or ${CONFIG_ENV_VAR}).")
@click.option("--seed", default=None, type=int, help="Experiment seed.")
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Output directory for artifacts.")
@click.option("--preset", default=None, help="Experiment preset name.")
@click.pass_context
def main(ctx, server, config_path, seed, out_dir, preset):
    """Memristor crossbar neural core simulator."""
    ctx.ensure_object(dict)
    cfg = _load_config(config_path)
    ctx.obj["config"] = cfg
    ctx.obj["client"] = ServiceClient(server or cfg.get("server"))
    ctx.obj["seed"] = seed if seed is not None else cfg.get("seed", 7)
    ctx.obj["out_dir"] = out_dir or cfg.get("out_dir", "runs/latest")
    ctx.obj["preset"] = preset or cfg.get("preset")


def _experiment_payload(ctx, preset, eta, epochs, pretrain_epochs, n_train):
    cfg = ctx.obj["config"]
    preset = preset or ctx.obj["preset"]
    if not preset:
        click.echo("error (config): no preset given (use --preset)", err=True)
        sys.exit(exit_code_for("config"))
    payload = {
        "preset": preset,
        "seed": ctx.obj["seed"],
        "out_dir": ctx.obj["out_dir"],
        "eta": eta if eta is not None else cfg.get("eta"),
        "epochs": epochs if epochs is not None else cfg.get("epochs"),
        "pretrain_epochs": (pretrain_epochs if pretrain_epochs is not None
                            else cfg.get("pretrain_epochs")),
        "n_train": n_train if n_train is not None else cfg.get("n_train"),
        "device": cfg.get("device"),
    }
    return {k: v for k, v in payload.items() if v is not None}


@main.group()
def device():
    """Device-level simulations."""


@device.command("sim")
@click.option("--voltage", required=True, type=float)
@click.option("--duration", required=True, type=float, help="Pulse length in seconds.")
@click.option("--dt", default=1e-8, type=float)
@click.option("--x0", default=0.001, type=float)
@click.option("--trace", default=0, type=int, help="Number of trace points to record.")
@click.option("--out-file", default=None, type=click.Path())
@click.pass_context
def device_sim(ctx, voltage, duration, dt, x0, trace, out_file):
    """Apply a constant-voltage pulse to a single device."""
    payload = {"voltage": voltage, "duration_s": duration, "dt_s": dt,
               "x0": x0, "trace_points": trace}
    _emit(ctx.obj["client"].post("/device/sim", payload), out_file)


@main.group()
def xbar():
    """Crossbar solves and benchmarks."""


@xbar.command("solve")
@click.option("--rows", type=int, default=None)
@click.option("--cols", type=int, default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Crossbar state CSV (header: rows,cols,wire_resistance).")
@click.option("--rw", "wire_resistance", default=1.5, type=float)
@click.option("--inputs", default=None, help="Comma-separated row voltages.")
@click.option("--input-seed", default=None, type=int,
              help="Random sub-threshold inputs from this seed.")
@click.option("--state-seed", default=0, type=int)
@click.option("--dense", is_flag=True, help="Use the direct solver.")
@click.option("--mode", default="linearized", type=click.Choice(["linearized", "sinh"]))
@click.option("--tolerance", default=1e-9, type=float)
@click.option("--max-iterations", default=100_000, type=int)
@click.option("--nodes", is_flag=True, help="Include node voltages in the output.")
@click.option("--out-file", default=None, type=click.Path())
@click.pass_context
def xbar_solve(ctx, rows, cols, csv_path, wire_resistance, inputs, input_seed,
               state_seed, dense, mode, tolerance, max_iterations, nodes, out_file):
    """Solve one crossbar for node voltages and column currents."""
    states = None
    if csv_path:
        from .xbar import load_crossbar_csv

        try:
            xb = load_crossbar_csv(csv_path)
        except Exception as exc:
            kind = getattr(exc, "kind", "format")
            click.echo(f"error ({kind}): {exc}", err=True)
            sys.exit(exit_code_for(kind))
        rows, cols = xb.geometry.rows, xb.geometry.cols
        wire_resistance = xb.geometry.wire_resistance
        states = xb.states.tolist()
    if rows is None or cols is None:
        click.echo("error (config): give --rows/--cols or --csv", err=True)
        sys.exit(exit_code_for("config"))
    if inputs is not None:
        drive = _parse_floats(inputs)
    else:
        import numpy as np

        rng = np.random.default_rng(input_seed if input_seed is not None
                                    else ctx.obj["seed"])
        drive = rng.uniform(-0.5, 0.5, rows).tolist()
    payload = {
        "rows": rows, "cols": cols, "wire_resistance": wire_resistance,
        "states": states, "state_seed": state_seed, "inputs": drive,
        "tolerance": tolerance, "max_iterations": max_iterations,
        "conduction_mode": mode, "method": "dense" if dense else "jacobi",
        "include_node_voltages": nodes,
    }
    _emit(ctx.obj["client"].post("/xbar/solve", payload), out_file)


@xbar.command("bench")
@click.option("--sizes", default="8x8,16x16,32x32", help="Comma-separated MxN sizes.")
@click.option("--rw", default="0,1.5,15", help="Comma-separated wire resistances.")
@click.option("--trials", default=3, type=int)
@click.option("--tolerance", default=1e-12, type=float)
@click.option("--out-file", default=None, type=click.Path())
@click.pass_context
def xbar_bench(ctx, sizes, rw, trials, tolerance, out_file):
    """Randomized relaxation-vs-direct agreement benchmark."""
    try:
        size_list = [tuple(int(v) for v in s.split("x")) for s in sizes.split(",")]
    except ValueError:
        click.echo(f"error (config): cannot parse sizes {sizes!r}", err=True)
        sys.exit(exit_code_for("config"))
    payload = {"sizes": size_list, "wire_resistances": _parse_floats(rw),
               "trials": trials, "seed": ctx.obj["seed"], "tolerance": tolerance}
    _emit(ctx.obj["client"].post("/xbar/bench", payload), out_file)


@main.command("map")
@click.option("--topology", default=None, help="Comma-separated layer widths.")
@click.option("--max-inputs", default=400, type=int)
@click.option("--max-neurons", default=100, type=int)
@click.option("--mesh", default="24x24")
@click.option("--out-file", default=None, type=click.Path())
@click.pass_context
def map_cmd(ctx, topology, max_inputs, max_neurons, mesh, out_file):
    """Split a network and pack it onto the core mesh."""
    if topology:
        widths = [int(v) for v in topology.split(",")]
    else:
        preset = ctx.obj["preset"]
        from .experiment import PRESETS

        if not preset or preset not in PRESETS:
            click.echo("error (config): give --topology or a known --preset", err=True)
            sys.exit(exit_code_for("config"))
        widths = list(PRESETS[preset].map_topology)
    try:
        mesh_dims = tuple(int(v) for v in mesh.split("x"))
        assert len(mesh_dims) == 2
    except (ValueError, AssertionError):
        click.echo(f"error (config): cannot parse mesh {mesh!r}", err=True)
        sys.exit(exit_code_for("config"))
    payload = {"topology": widths, "max_inputs": max_inputs,
               "max_neurons": max_neurons, "mesh": mesh_dims}
    _emit(ctx.obj["client"].post("/map", payload), out_file)


@main.command("cost")
@click.option("--phase", default="training",
              type=click.Choice(["training", "recognition"]))
@click.option("--app", "app_preset", default=None,
              help="Full-scale application preset (kdd_anomaly, mnist_class, ...).")
@click.option("--cores", default=None, type=int)
@click.option("--layers", default=None, type=int)
@click.option("--io-bits", default=None, type=int)
@click.option("--out-file", default=None, type=click.Path())
@click.pass_context
def cost_cmd(ctx, phase, app_preset, cores, layers, io_bits, out_file):
    """Per-input time/energy/area report."""
    payload = {"phase": phase, "preset": app_preset or ctx.obj["preset"],
               "n_cores": cores, "n_layers": layers, "io_bits": io_bits}
    payload = {k: v for k, v in payload.items() if v is not None}
    _emit(ctx.obj["client"].post("/cost", payload), out_file)


@main.command("report")
@click.option("--phase", default="training",
              type=click.Choice(["training", "recognition"]))
@click.option("--out-file", default=None, type=click.Path())
@click.pass_context
def report_cmd(ctx, phase, out_file):
    """System-level cost table over all application presets."""
    result = ctx.obj["client"].post("/report", {"phase": phase})
    if out_file:
        with open(out_file, "w", encoding="ascii") as fh:
            fh.write(result["header"] + "\n")
            for row in result["rows"]:
                fh.write(row + "\n")
        click.echo(f"wrote {out_file}")
    else:
        click.echo(result["header"])
        for row in result["rows"]:
            click.echo(row)


def _train_like(ctx, endpoint, preset, eta, epochs, pretrain_epochs, n_train):
    payload = _experiment_payload(ctx, preset, eta, epochs, pretrain_epochs, n_train)
    result = ctx.obj["client"].post(endpoint, payload)
    _emit(result)


@main.command("train")
@click.option("--preset", "preset_opt", default=None)
@click.option("--eta", default=None, type=float)
@click.option("--epochs", default=None, type=int)
@click.option("--pretrain-epochs", default=None, type=int)
@click.option("--n-train", default=None, type=int)
@click.pass_context
def train_cmd(ctx, preset_opt, eta, epochs, pretrain_epochs, n_train):
    """Train a preset network (pretraining included when configured)."""
    _train_like(ctx, "/train", preset_opt, eta, epochs, pretrain_epochs, n_train)


@main.command("pretrain")
@click.option("--preset", "preset_opt", default=None)
@click.option("--eta", default=None, type=float)
@click.option("--epochs", default=None, type=int)
@click.option("--pretrain-epochs", default=None, type=int)
@click.option("--n-train", default=None, type=int)
@click.pass_context
def pretrain_cmd(ctx, preset_opt, eta, epochs, pretrain_epochs, n_train):
    """Unsupervised pretraining only."""
    _train_like(ctx, "/pretrain", preset_opt, eta, epochs, pretrain_epochs, n_train)


@main.command("run")
@click.option("--preset", "preset_opt", default=None)
@click.option("--eta", default=None, type=float)
@click.option("--epochs", default=None, type=int)
@click.option("--pretrain-epochs", default=None, type=int)
@click.option("--n-train", default=None, type=int)
@click.pass_context
def run_cmd(ctx, preset_opt, eta, epochs, pretrain_epochs, n_train):
    """Full experiment: train, map, cost, artifacts."""
    _train_like(ctx, "/run", preset_opt, eta, epochs, pretrain_epochs, n_train)


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve_cmd(host, port):
    """Run the HTTP service under uvicorn."""
    import uvicorn

    uvicorn.run("memcore.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
