"""On-array training: stochastic backpropagation over crossbar layers.

Per input pattern: (1) forward-evaluate every layer, recording quantized
outputs and dot products; (2) form output errors from (target - output)
scaled by the activation derivative looked up at the quantized dot
product, then push errors backwards by driving +/-delta onto the column
pairs and reading the transposed crossbar's row currents; (3) convert each
error/input product into a device pulse whose amplitude is set by the
input magnitude and whose duration is set by |eta * delta|.

The amplitude map inverts the exponential threshold drive so that the
realized conductance change is proportional to eta * delta * x, matching
the ideal rule delta_w = 2 * eta * delta * x. Both devices of a pair are
pulsed in opposite directions (two phases), which doubles the step per
update and keeps the common mode flat away from the clamps.

The activation derivative table stores the shifted sigmoid derivative, not
the derivative of the clipped-linear transfer: the clipped branch would be
exactly zero in saturation and stall training.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .device import DeviceParams, integrate_pulse_grid
from .errors import ConfigError
from .layer import (DP_QUANT_DEFAULT, OUT_QUANT_DEFAULT, LayerCircuit,
                    QuantizerSpec, activation_h, evaluate_layer, quantize,
                    sigmoid_fprime)
from .xbar import (Crossbar, CrossbarGeometry, SolverConfig, load_crossbar_csv,
                   save_crossbar_csv, solve_jacobi)

ERR_QUANT_DEFAULT = QuantizerSpec(bits=8, lo=-0.5, hi=0.5)


@dataclass
class FPrimeTable:
    """Activation-derivative lookup at the dot-product quantizer levels."""

    quant: QuantizerSpec
    entries: np.ndarray

    def lookup(self, dp):
        idx = np.floor((np.asarray(dp, dtype=float) - self.quant.lo) / self.quant.step + 0.5)
        idx = np.clip(idx, 0, self.quant.n_levels - 1).astype(int)
        out = self.entries[idx]
        return float(out) if np.ndim(dp) == 0 else out


def fprime_table(bits: int = 8, lo: float = -4.0, hi: float = 4.0) -> FPrimeTable:
    quant = QuantizerSpec(bits=bits, lo=lo, hi=hi)
    return FPrimeTable(quant=quant, entries=sigmoid_fprime(quant.levels()))


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for the pulse-based stochastic trainer.

    eta is the error scale of the update rule delta_w = 2*eta*delta*x (the
    effective learning rate is 2*eta). tau0 converts |eta*delta| into pulse
    seconds. write_drive_scale, when set, overrides the calibrated inverse
    drive scale used by the amplitude map.
    """

    eta: float = 0.1
    epochs: int = 30
    err_quant: QuantizerSpec = ERR_QUANT_DEFAULT
    pulse_dt: float = 1e-8
    tau0: float = 1e-6
    write_drive_scale: float | None = None
    target_mse: float = 0.0
    rng_seed: int = 7
    rebalance: bool = False

    def __post_init__(self):
        if not (self.eta > 0):
            raise ConfigError(f"eta must be > 0, got {self.eta}", module="train")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}", module="train")
        if not (self.tau0 > 0 and self.pulse_dt > 0):
            raise ConfigError("tau0 and pulse_dt must be > 0", module="train")


@dataclass
class NetworkCircuit:
    layers: list

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ConfigError(
                    f"layer widths disagree: {a.n_out} -> {b.n_in}", module="train")

    @property
    def topology(self) -> list:
        return [self.layers[0].n_in] + [lc.n_out for lc in self.layers]


def init_network(topology, seed: int, *, params: DeviceParams | None = None,
                 wire_resistance: float = 0.0, rf: float = 5e5,
                 init_x: tuple = (0.001, 0.002),
                 out_quant: QuantizerSpec = OUT_QUANT_DEFAULT,
                 dp_quant: QuantizerSpec = DP_QUANT_DEFAULT) -> NetworkCircuit:
    """Fresh network with every device drawn in the high-resistance band
    (default x in [0.001, 0.002], i.e. 5-10 MOhm). Deterministic in seed."""
    if len(topology) < 2:
        raise ConfigError("topology needs at least input and output widths", module="train")
    params = params or DeviceParams()
    rng = np.random.default_rng(seed)
    layers = []
    for n_in, n_out in zip(topology, topology[1:]):
        grid = rng.uniform(init_x[0], init_x[1], size=(n_in + 1, 2 * n_out))
        layers.append(LayerCircuit.build(n_in, n_out, params=params,
                                         wire_resistance=wire_resistance, rf=rf,
                                         states=grid, out_quant=out_quant,
                                         dp_quant=dp_quant))
    return NetworkCircuit(layers)


def _quantize_error(value: np.ndarray, q: QuantizerSpec) -> np.ndarray:
    # An exact zero stays zero: the error path idles rather than emitting
    # the half-LSB code the mid-rise quantizer would otherwise produce.
    quantized = quantize(value, q)
    return np.where(value == 0.0, 0.0, quantized)


def output_error(t, y, dp, tab: FPrimeTable, q: QuantizerSpec = ERR_QUANT_DEFAULT,
                 quantized: bool = True):
    """Output-layer error (t - y) * f'(dp), quantized for the update path."""
    raw = np.asarray(t, dtype=float) - np.asarray(y, dtype=float)
    fp = tab.lookup(dp) if quantized else sigmoid_fprime(dp)
    value = raw * fp
    if not quantized:
        return value
    out = _quantize_error(np.atleast_1d(value), q)
    return float(out[0]) if np.ndim(value) == 0 else out


def backprop_errors_crossbar(lc: LayerCircuit, delta_next, dp_prev,
                             tab: FPrimeTable, solver: SolverConfig | None = None,
                             q: QuantizerSpec = ERR_QUANT_DEFAULT,
                             quantized: bool = True) -> np.ndarray:
    """Push errors through a layer's weights via its own crossbar.

    +delta_j drives the sigma_plus column and -delta_j the sigma_minus
    column of neuron j; the differential row currents then carry
    sum_j w_ij * delta_j / (4*Rf). The bias row's current is discarded.
    """
    delta = np.asarray(delta_next, dtype=float)
    if delta.shape != (lc.n_out,):
        raise ConfigError(f"expected {lc.n_out} errors, got shape {delta.shape}", module="train")
    dp_prev = np.asarray(dp_prev, dtype=float)
    if dp_prev.shape != (lc.n_in,):
        raise ConfigError(f"expected {lc.n_in} upstream dot products", module="train")
    if not np.any(delta):
        return np.zeros(lc.n_in)

    drive = np.empty(2 * lc.n_out)
    drive[0::2] = delta
    drive[1::2] = -delta
    geom = lc.xb.geometry
    if geom.wire_resistance == 0.0:
        # Short-circuit transpose: differential per pair first, summed
        # without fused multiply-adds, so symmetric pairs cancel exactly.
        dg = lc.xb.conductances()[:-1, 0::2] - lc.xb.conductances()[:-1, 1::2]
        row_currents = (dg * delta[None, :]).sum(axis=1)
    else:
        transposed = Crossbar(CrossbarGeometry(geom.cols, geom.rows, geom.wire_resistance),
                              lc.xb.states.T.copy(), lc.xb.params, x_floor=lc.xb.x_floor)
        sol = solve_jacobi(transposed, drive, solver or SolverConfig())
        row_currents = sol.column_currents[:-1]

    fp = tab.lookup(dp_prev) if quantized else sigmoid_fprime(dp_prev)
    value = (4.0 * lc.rf * row_currents) * fp
    if not quantized:
        return value
    return _quantize_error(value, q)


def write_drive_scale(params: DeviceParams, rf: float, tau0: float) -> float:
    """Calibrated inverse-drive scale c.

    The amplitude map puts g(V(x)) = c*|x| on the pulsed device; with both
    pair devices pulsed for tau0*|eta*delta| seconds the total weight step
    is 8*Rf*a1*b*tau0*c*|eta*delta*x|, and c is chosen so that equals
    2*|eta*delta*x| in the free-motion band.
    """
    return 1.0 / (4.0 * rf * params.a1 * params.b * tau0)


def write_amplitudes(params: DeviceParams, scale: float, magnitudes: np.ndarray):
    """Super-threshold pulse amplitudes realizing drive rate scale*|x|.

    Inverts the exponential threshold drive; zero magnitude maps to zero
    (no pulse). Returns (raise_amplitude, lower_amplitude) magnitudes.
    """
    m = np.asarray(magnitudes, dtype=float)
    up = np.where(m > 0, np.log(scale * m / params.ap + math.exp(params.vp)), 0.0)
    down = np.where(m > 0, np.log(scale * m / params.an + math.exp(params.vn)), 0.0)
    return up, down


def check_write_discipline(params: DeviceParams, scale: float,
                           max_magnitude: float = 0.5) -> None:
    """Half-selected rows and columns see half the write amplitude; that
    level must stay under the threshold or reads would disturb state."""
    up, down = write_amplitudes(params, scale, np.asarray([max_magnitude]))
    worst = max(float(up[0]), float(down[0]))
    if worst / 2.0 >= params.min_threshold:
        raise ConfigError(
            f"half-select level {worst / 2.0:.3g} V reaches the write threshold "
            f"{params.min_threshold} V; lower tau0 or the drive scale", module="train")


def weight_update(lc: LayerCircuit, inputs, deltas, cfg: TrainConfig) -> None:
    """Pulse every device pair toward delta_w = 2*eta*delta_j*x_i.

    Amplitude is modulated by |x_i| through the inverse-drive map, duration
    by tau0*|eta*delta_j|; polarity follows sign(delta_j * x_i), raising
    sigma_plus and lowering sigma_minus for positive delta_w (and the
    mirror image for negative). Zero delta or zero input leaves the pair
    untouched. Devices pushed past a clamp stay clamped and are tallied in
    the layer's saturation counter.
    """
    x_in = np.asarray(inputs, dtype=float)
    delta = np.asarray(deltas, dtype=float)
    if x_in.shape != (lc.n_in + 1,):
        raise ConfigError(
            f"expected {lc.n_in + 1} forward inputs (bias included), got {x_in.shape}",
            module="train")
    if delta.shape != (lc.n_out,):
        raise ConfigError(f"expected {lc.n_out} errors, got {delta.shape}", module="train")
    if not np.any(delta) or not np.any(x_in):
        return

    params = lc.xb.params
    scale = cfg.write_drive_scale
    if scale is None:
        scale = write_drive_scale(params, lc.rf, cfg.tau0)
    check_write_discipline(params, scale, max_magnitude=float(np.max(np.abs(x_in))))

    amp_up, amp_down = write_amplitudes(params, scale, np.abs(x_in))
    sign = np.sign(np.outer(x_in, delta))              # sign of delta_w
    durations = np.broadcast_to(cfg.tau0 * np.abs(cfg.eta * delta), sign.shape)
    durations = np.where(sign == 0.0, 0.0, durations)

    # sigma_plus moves with delta_w, sigma_minus against it.
    v_plus = np.where(sign > 0, amp_up[:, None], -amp_down[:, None]) * np.abs(sign)
    v_minus = -np.where(sign > 0, amp_down[:, None], -amp_up[:, None]) * np.abs(sign)

    states = lc.xb.states
    new_p, sat_p = integrate_pulse_grid(params, states[:, 0::2], v_plus, durations,
                                        cfg.pulse_dt, x_floor=lc.xb.x_floor)
    new_m, sat_m = integrate_pulse_grid(params, states[:, 1::2], v_minus, durations,
                                        cfg.pulse_dt, x_floor=lc.xb.x_floor)
    states[:, 0::2] = new_p
    states[:, 1::2] = new_m
    lc.saturation_events += sat_p + sat_m

    if cfg.rebalance:
        _rebalance_pairs(lc)


def _rebalance_pairs(lc: LayerCircuit) -> None:
    """Rewrite pairs that hit the upper clamp back to minimal common mode,
    preserving the signed weight."""
    xp = lc.xb.states[:, 0::2]
    xm = lc.xb.states[:, 1::2]
    hit = (xp >= 1.0) | (xm >= 1.0)
    if not np.any(hit):
        return
    floor = lc.xb.x_floor
    diff = xp - xm
    xp_new = np.where(hit, floor + np.maximum(diff, 0.0), xp)
    xm_new = np.where(hit, floor + np.maximum(-diff, 0.0), xm)
    lc.xb.states[:, 0::2] = np.clip(xp_new, floor, 1.0)
    lc.xb.states[:, 1::2] = np.clip(xm_new, floor, 1.0)


def forward_pass(net: NetworkCircuit, x, solver: SolverConfig | None = None,
                 quantized: bool = True):
    """Evaluate all layers; returns (per-layer inputs incl. bias, outputs)."""
    solver = solver or SolverConfig()
    current = np.asarray(x, dtype=float)
    layer_inputs = []
    layer_outputs = []
    for lc in net.layers:
        out = evaluate_layer(lc, current, solver=solver, quantized=quantized)
        layer_inputs.append(np.concatenate([current, [lc.vdd]]))
        layer_outputs.append(out)
        current = out.y
    return layer_inputs, layer_outputs


def predict(net: NetworkCircuit, x, solver: SolverConfig | None = None,
            quantized: bool = True) -> np.ndarray:
    return forward_pass(net, x, solver, quantized)[1][-1].y


def predict_batch(net: NetworkCircuit, xs, solver: SolverConfig | None = None,
                  quantized: bool = True) -> np.ndarray:
    return np.stack([predict(net, row, solver, quantized) for row in np.asarray(xs)])


def train_step(net: NetworkCircuit, x, target, cfg: TrainConfig,
               solver: SolverConfig | None = None,
               tab: FPrimeTable | None = None) -> float:
    """One stochastic update: forward, error backprop, pulse updates.

    Returns the pre-update mean squared output error for this pattern.
    """
    solver = solver or SolverConfig()
    tab = tab or fprime_table(net.layers[-1].dp_quant.bits,
                              net.layers[-1].dp_quant.lo, net.layers[-1].dp_quant.hi)
    t = np.asarray(target, dtype=float)
    layer_inputs, layer_outputs = forward_pass(net, x, solver)
    y = layer_outputs[-1].y
    if t.shape != y.shape:
        raise ConfigError(f"target shape {t.shape} does not match output {y.shape}",
                          module="train")
    mse = float(np.mean((t - y) ** 2))

    deltas = [None] * len(net.layers)
    deltas[-1] = np.atleast_1d(output_error(t, y, layer_outputs[-1].dp, tab, cfg.err_quant))
    for k in range(len(net.layers) - 1, 0, -1):
        deltas[k - 1] = backprop_errors_crossbar(net.layers[k], deltas[k],
                                                 layer_outputs[k - 1].dp, tab,
                                                 solver, cfg.err_quant)
    for lc, x_in, delta in zip(net.layers, layer_inputs, deltas):
        weight_update(lc, x_in, delta, cfg)
    return mse


def run_supervised(net: NetworkCircuit, xs, targets, cfg: TrainConfig,
                   solver: SolverConfig | None = None,
                   epochs: int | None = None,
                   rng: np.random.Generator | None = None) -> list:
    """Epoch loop with seed-driven shuffling; returns per-epoch mean MSE."""
    xs = np.asarray(xs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if len(xs) != len(targets):
        raise ConfigError("sample and target counts differ", module="train")
    solver = solver or SolverConfig()
    tab = fprime_table(net.layers[-1].dp_quant.bits,
                       net.layers[-1].dp_quant.lo, net.layers[-1].dp_quant.hi)
    rng = rng or np.random.default_rng(cfg.rng_seed)
    curve = []
    for _ in range(epochs or cfg.epochs):
        order = rng.permutation(len(xs))
        total = 0.0
        for i in order:
            total += train_step(net, xs[i], targets[i], cfg, solver, tab)
        curve.append(total / len(xs))
        if cfg.target_mse > 0 and curve[-1] < cfg.target_mse:
            break
    return curve


def train_autoencoder(layer_in: int, hidden: int, data, cfg: TrainConfig,
                      solver: SolverConfig | None = None,
                      seed: int | None = None,
                      params: DeviceParams | None = None):
    """Train layer_in -> hidden -> layer_in with targets = inputs.

    Returns (encoder layer, decoder layer, per-epoch MSE curve).
    """
    seed = cfg.rng_seed if seed is None else seed
    net = init_network([layer_in, hidden, layer_in], seed, params=params)
    curve = run_supervised(net, data, data, cfg, solver,
                           rng=np.random.default_rng(seed + 1))
    return net.layers[0], net.layers[1], curve


def encode_batch(encoder: LayerCircuit, xs, solver: SolverConfig | None = None) -> np.ndarray:
    solver = solver or SolverConfig()
    return np.stack([evaluate_layer(encoder, row, solver=solver).y for row in np.asarray(xs)])


def pretrain_stack(topology, data, cfg: TrainConfig,
                   solver: SolverConfig | None = None,
                   params: DeviceParams | None = None) -> NetworkCircuit:
    """Greedy layer-wise pretraining: each hidden layer is the encoder of
    an autoencoder trained on the representation below it; the output
    layer starts fresh."""
    if len(topology) < 3:
        raise ConfigError("stacked pretraining needs at least one hidden layer",
                          module="train")
    reps = np.asarray(data, dtype=float)
    encoders = []
    for k in range(1, len(topology) - 1):
        enc, _dec, _curve = train_autoencoder(topology[k - 1], topology[k], reps, cfg,
                                              solver, seed=cfg.rng_seed + k,
                                              params=params)
        encoders.append(enc)
        reps = encode_batch(enc, reps, solver)
    out_seed = cfg.rng_seed + len(topology)
    out_layer = init_network(topology[-2:], out_seed, params=params).layers[0]
    return NetworkCircuit(encoders + [out_layer])


class SoftwareNetwork:
    """Plain floating-point twin of the circuit trainer.

    Same conventions: weights include a bias row driven at +0.5, the
    activation is the rail-clipped h, the error derivative is the shifted
    sigmoid's, and updates follow delta_w = 2*eta*delta*x. No quantizers,
    no device model. Used as the gradient oracle and as the unconstrained
    reference in constraint studies.
    """

    def __init__(self, topology, seed: int, weight_scale: float = 0.1, bias_v: float = 0.5):
        rng = np.random.default_rng(seed)
        self.bias_v = bias_v
        self.weights = [rng.uniform(-weight_scale, weight_scale, size=(n_in + 1, n_out))
                        for n_in, n_out in zip(topology, topology[1:])]

    @classmethod
    def from_circuit(cls, net: NetworkCircuit) -> "SoftwareNetwork":
        twin = cls([net.layers[0].n_in] + [lc.n_out for lc in net.layers], seed=0)
        twin.weights = [lc.weights().copy() for lc in net.layers]
        twin.bias_v = net.layers[0].vdd
        return twin

    def forward(self, x):
        acts = [np.asarray(x, dtype=float)]
        dps = []
        for w in self.weights:
            xin = np.concatenate([acts[-1], [self.bias_v]])
            dp = w.T @ xin
            dps.append(dp)
            acts.append(activation_h(dp))
        return acts, dps

    def predict(self, x):
        return self.forward(x)[0][-1]

    def predict_batch(self, xs):
        return np.stack([self.predict(row) for row in np.asarray(xs)])

    def gradients(self, x, target):
        """Per-layer (delta, input) pairs for the squared-error objective."""
        acts, dps = self.forward(x)
        t = np.asarray(target, dtype=float)
        deltas = [None] * len(self.weights)
        deltas[-1] = (t - acts[-1]) * sigmoid_fprime(dps[-1])
        for k in range(len(self.weights) - 1, 0, -1):
            w_data = self.weights[k][:-1, :]
            deltas[k - 1] = (w_data @ deltas[k]) * sigmoid_fprime(dps[k - 1])
        inputs = [np.concatenate([a, [self.bias_v]]) for a in acts[:-1]]
        return deltas, inputs, acts[-1]

    def train_step(self, x, target, eta: float) -> float:
        deltas, inputs, y = self.gradients(x, target)
        mse = float(np.mean((np.asarray(target) - y) ** 2))
        for w, xin, delta in zip(self.weights, inputs, deltas):
            w += 2.0 * eta * np.outer(xin, delta)
        return mse

    def run(self, xs, targets, eta: float, epochs: int, seed: int) -> list:
        rng = np.random.default_rng(seed)
        xs = np.asarray(xs, dtype=float)
        targets = np.asarray(targets, dtype=float)
        curve = []
        for _ in range(epochs):
            order = rng.permutation(len(xs))
            total = 0.0
            for i in order:
                total += self.train_step(xs[i], targets[i], eta)
            curve.append(total / len(xs))
        return curve


def save_checkpoint(net: NetworkCircuit, path: str, extra: dict | None = None) -> None:
    """Topology plus one crossbar CSV per layer, with a small JSON header."""
    os.makedirs(path, exist_ok=True)
    meta = {
        "topology": net.topology,
        "layers": [],
    }
    if extra:
        meta["extra"] = extra
    for k, lc in enumerate(net.layers):
        name = f"layer_{k:02d}.csv"
        save_crossbar_csv(lc.xb, os.path.join(path, name))
        meta["layers"].append({
            "file": name,
            "rf": lc.rf,
            "vdd": lc.vdd,
            "vss": lc.vss,
            "out_quant": [lc.out_quant.bits, lc.out_quant.lo, lc.out_quant.hi],
            "dp_quant": [lc.dp_quant.bits, lc.dp_quant.lo, lc.dp_quant.hi],
        })
    with open(os.path.join(path, "network.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str, params: DeviceParams | None = None) -> NetworkCircuit:
    with open(os.path.join(path, "network.json"), "r", encoding="ascii") as fh:
        meta = json.load(fh)
    layers = []
    for entry in meta["layers"]:
        xb = load_crossbar_csv(os.path.join(path, entry["file"]), params)
        layers.append(LayerCircuit(
            xb=xb, rf=entry["rf"], vdd=entry["vdd"], vss=entry["vss"],
            out_quant=QuantizerSpec(*entry["out_quant"]),
            dp_quant=QuantizerSpec(*entry["dp_quant"])))
    return NetworkCircuit(layers)
