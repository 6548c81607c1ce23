"""Crossbar circuit evaluation.

An M x N crossbar has M row wires fed by input drivers, N column wires
ending in virtual grounds, one memristor bridging every row/column
crossing, and a wire-segment resistance Rw on every one of the 2MN wire
segments (driver -> row node 1 -> ... -> row node N along each row;
column node 1 -> ... -> column node M -> ground down each column).

Solving means finding all 2MN node voltages from Kirchhoff current
balance. Two solvers are provided: a Jacobi relaxation (every node update
computed from the previous sweep, so sweeps are order-independent and
vectorize) and a direct sparse nodal solve used as the accuracy oracle.
With Rw = 0 both take the analytic short-circuit form: row nodes sit at
the drive voltages, column nodes at ground.

Solving never mutates device states.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .device import DeviceParams, X_FLOOR_DEFAULT, conductance
from .errors import ConfigError, ConvergenceError, FormatError, OverdriveError

DENSE_NODE_LIMIT = 20_000  # direct solve guard on 2*M*N

try:
    from numba import njit, prange

    @njit(cache=True, parallel=True)
    def _sweep_kernel(row_v, col_v, new_r, new_c, g, v, gw, denom_r, denom_c):
        m, n = g.shape
        res = 0.0
        for i in prange(m):
            for j in range(n):
                left = v[i] if j == 0 else row_v[i, j - 1]
                acc = gw * left + g[i, j] * col_v[i, j]
                if j < n - 1:
                    acc += gw * row_v[i, j + 1]
                nr = acc / denom_r[i, j]
                res = max(res, abs(nr - row_v[i, j]))
                new_r[i, j] = nr
        for i in prange(m):
            for j in range(n):
                acc = g[i, j] * row_v[i, j]
                if i > 0:
                    acc += gw * col_v[i - 1, j]
                if i < m - 1:
                    acc += gw * col_v[i + 1, j]
                nc = acc / denom_c[i, j]
                res = max(res, abs(nc - col_v[i, j]))
                new_c[i, j] = nc
        return res

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    HAVE_NUMBA = False


@dataclass(frozen=True)
class CrossbarGeometry:
    rows: int
    cols: int
    wire_resistance: float = 1.5  # ohms per wire segment

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"crossbar needs rows, cols >= 1, got {self.rows}x{self.cols}",
                              module="xbar")
        if self.wire_resistance < 0:
            raise ConfigError(f"wire resistance must be >= 0, got {self.wire_resistance}",
                              module="xbar")


@dataclass
class Crossbar:
    geometry: CrossbarGeometry
    states: np.ndarray                       # (M, N) grid of x values
    params: DeviceParams = field(default_factory=DeviceParams)
    x_floor: float = X_FLOOR_DEFAULT

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        m, n = self.geometry.rows, self.geometry.cols
        if self.states.shape != (m, n):
            raise ConfigError(
                f"state grid shape {self.states.shape} does not match geometry {m}x{n}",
                module="xbar")
        if np.any(self.states < self.x_floor - 1e-15) or np.any(self.states > 1.0 + 1e-15):
            raise ConfigError("crossbar states outside [x_floor, 1]", module="xbar")

    def conductances(self) -> np.ndarray:
        return conductance(self.params, self.states)


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-9          # volts, max node update between sweeps
    max_iterations: int = 100_000
    conduction_mode: str = "linearized"   # or "sinh"

    def __post_init__(self):
        if not (self.tolerance > 0):
            raise ConfigError(f"tolerance must be > 0, got {self.tolerance}", module="xbar")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1", module="xbar")
        if self.conduction_mode not in ("linearized", "sinh"):
            raise ConfigError(f"unknown conduction mode {self.conduction_mode!r}", module="xbar")


@dataclass
class NodeSolution:
    row_node_voltages: np.ndarray   # (M, N)
    col_node_voltages: np.ndarray   # (M, N)
    column_currents: np.ndarray     # (N,)
    iterations: int
    residual: float


def _check_inputs(xb: Crossbar, inputs) -> np.ndarray:
    v = np.asarray(inputs, dtype=float)
    if v.shape != (xb.geometry.rows,):
        raise ConfigError(
            f"expected {xb.geometry.rows} row voltages, got shape {v.shape}", module="xbar")
    if not np.all(np.isfinite(v)):
        raise ConfigError("row voltages must be finite", module="xbar")
    vth = xb.params.min_threshold
    worst = float(np.max(np.abs(v))) if v.size else 0.0
    if worst > vth:
        # All node potentials lie within the driven range, so a device can
        # only be overdriven if an input already exceeds the threshold.
        raise OverdriveError(
            f"evaluation drive {worst:.3g} V exceeds write threshold {vth:.3g} V",
            module="xbar")
    return v


def _device_currents(xb: Crossbar, dv: np.ndarray, mode: str) -> np.ndarray:
    if mode == "sinh":
        scale = np.where(dv >= 0.0, xb.params.a1, xb.params.a2)
        return scale * xb.states * np.sinh(xb.params.b * dv)
    return xb.conductances() * dv


def _effective_conductances(xb: Crossbar, dv: np.ndarray, mode: str) -> np.ndarray:
    """Secant conductance I(dv)/dv; reduces to the linearized value at dv=0."""
    g_lin = xb.conductances()
    if mode != "sinh":
        return g_lin
    t = xb.params.b * dv
    small = np.abs(t) < 1e-6
    sinhc = np.where(small, 1.0 + t * t / 6.0, np.sinh(np.where(small, 1.0, t)) / np.where(small, 1.0, t))
    scale_ratio = np.where(dv >= 0.0, 1.0, xb.params.a2 / xb.params.a1)
    return g_lin * scale_ratio * sinhc


def _short_circuit_solution(xb: Crossbar, v: np.ndarray, mode: str) -> NodeSolution:
    m, n = xb.geometry.rows, xb.geometry.cols
    row_v = np.tile(v[:, None], (1, n))
    col_v = np.zeros((m, n))
    currents = _device_currents(xb, row_v, mode).sum(axis=0)
    return NodeSolution(row_v, col_v, currents, iterations=0, residual=0.0)


def solve_jacobi(xb: Crossbar, inputs, cfg: SolverConfig | None = None) -> NodeSolution:
    """Relax all 2MN node voltages until the largest update drops below
    tolerance. Row nodes start at the drive voltages, column nodes at zero.

    Column currents are reported as the sum of device currents into each
    column, which equals the virtual-ground terminal current at
    convergence and is far less sensitive to residual node error than the
    last wire segment's IR drop.
    """
    cfg = cfg or SolverConfig()
    v = _check_inputs(xb, inputs)
    if xb.geometry.wire_resistance == 0.0:
        return _short_circuit_solution(xb, v, cfg.conduction_mode)

    m, n = xb.geometry.rows, xb.geometry.cols
    gw = 1.0 / xb.geometry.wire_resistance
    g_lin = xb.conductances()

    # Wire-neighbor counts: last row node has no right neighbor; the
    # bottom column node's ground link counts as a neighbor at 0 V.
    nbr_r = np.full(n, 2.0)
    nbr_r[-1] = 1.0
    nbr_c = np.full((m, 1), 2.0)
    nbr_c[0, 0] = 1.0

    row_v = np.tile(v[:, None], (1, n))
    col_v = np.zeros((m, n))
    use_kernel = HAVE_NUMBA and cfg.conduction_mode == "linearized"
    g = g_lin
    denom_r = g + gw * nbr_r[None, :]
    denom_c = g + gw * nbr_c

    new_r = np.empty((m, n))
    new_c = np.empty((m, n))
    iterations = 0
    residual = math.inf
    for iterations in range(1, cfg.max_iterations + 1):
        if use_kernel:
            residual = _sweep_kernel(row_v, col_v, new_r, new_c, g, v, gw,
                                     denom_r, denom_c)
        else:
            if cfg.conduction_mode == "sinh":
                g = _effective_conductances(xb, row_v - col_v, "sinh")
                denom_r = g + gw * nbr_r[None, :]
                denom_c = g + gw * nbr_c
            np.multiply(g, col_v, out=new_r)
            new_r[:, 0] += gw * v
            new_r[:, 1:] += gw * row_v[:, :-1]
            new_r[:, :-1] += gw * row_v[:, 1:]
            new_r /= denom_r
            np.multiply(g, row_v, out=new_c)
            new_c[1:, :] += gw * col_v[:-1, :]
            new_c[:-1, :] += gw * col_v[1:, :]
            new_c /= denom_c
            residual = max(float(np.max(np.abs(new_r - row_v))),
                           float(np.max(np.abs(new_c - col_v))))
        row_v, new_r = new_r, row_v
        col_v, new_c = new_c, col_v
        if residual <= cfg.tolerance:
            break
    if residual > cfg.tolerance:
        raise ConvergenceError(
            f"Jacobi solve did not reach {cfg.tolerance:g} V in "
            f"{cfg.max_iterations} sweeps (residual {residual:.3g} V)",
            residual=residual, iterations=cfg.max_iterations, module="xbar")

    currents = _device_currents(xb, row_v - col_v, cfg.conduction_mode).sum(axis=0)
    return NodeSolution(row_v, col_v, currents, iterations=iterations, residual=residual)


def solve_dense(xb: Crossbar, inputs) -> NodeSolution:
    """Direct nodal solve of the full 2MN system with linearized
    conductances; the correctness oracle for solve_jacobi."""
    v = _check_inputs(xb, inputs)
    m, n = xb.geometry.rows, xb.geometry.cols
    if 2 * m * n > DENSE_NODE_LIMIT:
        raise ConfigError(
            f"direct solve limited to 2MN <= {DENSE_NODE_LIMIT}, got {2 * m * n}",
            module="xbar")
    if xb.geometry.wire_resistance == 0.0:
        return _short_circuit_solution(xb, v, "linearized")

    gw = 1.0 / xb.geometry.wire_resistance
    g = xb.conductances()
    size = 2 * m * n

    def ridx(i, j):
        return i * n + j

    def cidx(i, j):
        return m * n + i * n + j

    rows_ix, cols_ix, vals = [], [], []
    rhs = np.zeros(size)

    def add(r, c, val):
        rows_ix.append(r)
        cols_ix.append(c)
        vals.append(val)

    for i in range(m):
        for j in range(n):
            r = ridx(i, j)
            diag = g[i, j]
            add(r, cidx(i, j), -g[i, j])
            if j == 0:
                diag += gw
                rhs[r] += gw * v[i]
            else:
                diag += gw
                add(r, ridx(i, j - 1), -gw)
            if j < n - 1:
                diag += gw
                add(r, ridx(i, j + 1), -gw)
            add(r, r, diag)

            c = cidx(i, j)
            diag_c = g[i, j]
            add(c, ridx(i, j), -g[i, j])
            if i > 0:
                diag_c += gw
                add(c, cidx(i - 1, j), -gw)
            if i < m - 1:
                diag_c += gw
                add(c, cidx(i + 1, j), -gw)
            else:
                diag_c += gw  # ground link, contributes no RHS
            add(c, c, diag_c)

    a = sp.csr_matrix((vals, (rows_ix, cols_ix)), shape=(size, size))
    x = spla.spsolve(a, rhs)
    row_v = x[: m * n].reshape(m, n)
    col_v = x[m * n:].reshape(m, n)
    currents = (g * (row_v - col_v)).sum(axis=0)
    return NodeSolution(row_v, col_v, currents, iterations=1, residual=0.0)


def ideal_forward(weights, inputs) -> np.ndarray:
    """Exact matrix-vector product: the zero-parasitic mathematical
    reference for a crossbar layer. weights is (M, n), inputs is (M,)."""
    w = np.asarray(weights, dtype=float)
    v = np.asarray(inputs, dtype=float)
    if w.ndim != 2 or v.ndim != 1 or w.shape[0] != v.shape[0]:
        raise ConfigError(
            f"shape mismatch: weights {w.shape} vs inputs {v.shape}", module="xbar")
    return w.T @ v


def save_crossbar_csv(xb: Crossbar, path) -> None:
    """Row-major grid of x values with a one-line geometry header."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("rows,cols,wire_resistance\n")
        fh.write(f"{xb.geometry.rows},{xb.geometry.cols},{xb.geometry.wire_resistance!r}\n")
        np.savetxt(fh, xb.states, delimiter=",", fmt="%.17g")


def load_crossbar_csv(path, params: DeviceParams | None = None,
                      x_floor: float = X_FLOOR_DEFAULT) -> Crossbar:
    params = params or DeviceParams()
    try:
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().strip()
            if header.split(",") != ["rows", "cols", "wire_resistance"]:
                raise FormatError(f"bad crossbar CSV header: {header!r}", module="xbar")
            dims = fh.readline().strip().split(",")
            if len(dims) != 3:
                raise FormatError("crossbar CSV line 2 must be 'M,N,Rw'", module="xbar")
            try:
                m, n, rw = int(dims[0]), int(dims[1]), float(dims[2])
            except ValueError as exc:
                raise FormatError(f"crossbar CSV line 2 unparseable: {exc}", module="xbar")
            body = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read crossbar CSV: {exc}", module="xbar")
    try:
        states = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise FormatError(f"crossbar CSV grid unparseable: {exc}", module="xbar")
    if states.shape != (m, n):
        raise FormatError(
            f"crossbar CSV grid shape {states.shape} does not match header {m}x{n}",
            module="xbar")
    return Crossbar(CrossbarGeometry(m, n, rw), states, params, x_floor=x_floor)
