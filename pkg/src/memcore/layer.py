"""A neuron layer as a crossbar circuit.

Each neuron owns two adjacent columns: the signed synaptic weight of input
i is 4*Rf*(sigma_plus - sigma_minus), the scaled conductance difference of
the device pair at row i. The last crossbar row is the bias input. The
column-current difference, scaled by the feedback resistance Rf and
clipped by the op-amp rails, realizes the clipped-linear activation
h(x) = clamp(x/4, -0.5, 0.5), which tracks the shifted sigmoid
f(x) = 1/(1+exp(-x)) - 0.5.

Outputs leave the layer through uniform ADC quantizers: a coarse one for
the neuron output y and a finer one for the pre-activation dot product
needed by the training circuitry. An unquantized diagnostic mode exists
for oracle comparisons only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .device import DeviceParams, X_FLOOR_DEFAULT
from .errors import ConfigError
from .xbar import Crossbar, CrossbarGeometry, NodeSolution, SolverConfig, solve_jacobi


def activation_h(x):
    """Rail-limited op-amp transfer: x/4 clipped to [-0.5, 0.5]."""
    out = np.clip(np.asarray(x, dtype=float) * 0.25, -0.5, 0.5)
    return float(out) if out.ndim == 0 else out


def sigmoid_ref(x):
    """Shifted sigmoid 1/(1+e^-x) - 0.5; the smooth reference for h."""
    out = expit(np.asarray(x, dtype=float)) - 0.5
    return float(out) if out.ndim == 0 else out


def sigmoid_fprime(x):
    """Derivative of the shifted sigmoid: e^-x / (1+e^-x)^2."""
    s = expit(np.asarray(x, dtype=float))
    out = s * (1.0 - s)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform quantizer: 2^bits levels spanning [lo, hi] inclusive,
    clamping outside, nearest level with ties rounding toward +inf."""

    bits: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.bits < 1:
            raise ConfigError(f"quantizer bits must be >= 1, got {self.bits}", module="layer")
        if not (self.lo < self.hi):
            raise ConfigError(f"quantizer needs lo < hi, got [{self.lo}, {self.hi}]",
                              module="layer")

    @property
    def n_levels(self) -> int:
        return 2 ** self.bits

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n_levels - 1)

    def levels(self) -> np.ndarray:
        return self.lo + self.step * np.arange(self.n_levels)


OUT_QUANT_DEFAULT = QuantizerSpec(bits=3, lo=-0.5, hi=0.5)
DP_QUANT_DEFAULT = QuantizerSpec(bits=8, lo=-4.0, hi=4.0)


def quantize(v, q: QuantizerSpec):
    clamped = np.clip(np.asarray(v, dtype=float), q.lo, q.hi)
    idx = np.clip(np.floor((clamped - q.lo) / q.step + 0.5), 0, q.n_levels - 1)
    out = q.lo + idx * q.step
    return float(out) if out.ndim == 0 else out


def synapse_weight(xplus, xminus, rf: float, p: DeviceParams):
    """Signed weight of a device pair: 4*Rf*(a1*b*xplus - a1*b*xminus)."""
    sig_p = p.a1 * p.b * np.asarray(xplus, dtype=float)
    sig_m = p.a1 * p.b * np.asarray(xminus, dtype=float)
    out = 4.0 * rf * (sig_p - sig_m)
    return float(out) if out.ndim == 0 else out


@dataclass
class LayerOutput:
    y: np.ndarray          # post-activation, post-quantization
    dp: np.ndarray         # quantized pre-activation dot products
    y_analog: np.ndarray   # pre-quantization rail-clipped output


@dataclass
class LayerCircuit:
    """Crossbar of (n_in + 1) rows x (2 * n_out) columns plus periphery."""

    xb: Crossbar
    rf: float = 5e5
    vdd: float = 0.5
    vss: float = -0.5
    out_quant: QuantizerSpec = OUT_QUANT_DEFAULT
    dp_quant: QuantizerSpec = DP_QUANT_DEFAULT
    saturation_events: int = 0

    def __post_init__(self):
        if self.xb.geometry.cols % 2 != 0:
            raise ConfigError("layer crossbar needs an even column count (one pair per neuron)",
                              module="layer")
        if self.xb.geometry.rows < 2:
            raise ConfigError("layer crossbar needs at least one data row plus the bias row",
                              module="layer")
        if self.vdd != -self.vss:
            raise ConfigError(f"rails must be symmetric, got ({self.vdd}, {self.vss})",
                              module="layer")
        if self.vdd >= self.xb.params.min_threshold:
            raise ConfigError(
                f"rail {self.vdd} V must stay below the write threshold "
                f"{self.xb.params.min_threshold} V", module="layer")
        if not (self.rf > 0):
            raise ConfigError(f"feedback resistance must be > 0, got {self.rf}", module="layer")

    @property
    def n_in(self) -> int:
        return self.xb.geometry.rows - 1

    @property
    def n_out(self) -> int:
        return self.xb.geometry.cols // 2

    @classmethod
    def build(cls, n_in: int, n_out: int, *, params: DeviceParams | None = None,
              wire_resistance: float = 0.0, rf: float = 5e5,
              states: np.ndarray | float | None = None,
              out_quant: QuantizerSpec = OUT_QUANT_DEFAULT,
              dp_quant: QuantizerSpec = DP_QUANT_DEFAULT) -> "LayerCircuit":
        params = params or DeviceParams()
        shape = (n_in + 1, 2 * n_out)
        if states is None:
            grid = np.full(shape, X_FLOOR_DEFAULT)
        elif np.isscalar(states):
            grid = np.full(shape, float(states))
        else:
            grid = np.asarray(states, dtype=float)
        xb = Crossbar(CrossbarGeometry(shape[0], shape[1], wire_resistance), grid, params)
        return cls(xb=xb, rf=rf, out_quant=out_quant, dp_quant=dp_quant)

    def weights(self) -> np.ndarray:
        """(n_in + 1, n_out) signed weights; the last row is the bias."""
        return synapse_weight(self.xb.states[:, 0::2], self.xb.states[:, 1::2],
                              self.rf, self.xb.params)

    def set_weights(self, w: np.ndarray, base_x: float | None = None) -> None:
        """Program device pairs to realize the given signed weights with the
        inactive device of each pair parked at base_x."""
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_in + 1, self.n_out):
            raise ConfigError(
                f"weights shape {w.shape}, expected {(self.n_in + 1, self.n_out)}",
                module="layer")
        base = self.xb.x_floor if base_x is None else base_x
        span = 4.0 * self.rf * self.xb.params.a1 * self.xb.params.b
        dx = np.abs(w) / span
        if np.any(base + dx > 1.0 + 1e-12):
            raise ConfigError("requested weight exceeds the device state range", module="layer")
        self.xb.states[:, 0::2] = base + np.where(w > 0, dx, 0.0)
        self.xb.states[:, 1::2] = base + np.where(w < 0, dx, 0.0)


def evaluate_layer(lc: LayerCircuit, inputs, bias_v: float | None = None,
                   solver: SolverConfig | None = None,
                   quantized: bool = True) -> LayerOutput:
    """Drive the rows with (inputs..., bias), solve the crossbar, and read
    each neuron's differential column current.

    y_analog = clamp(Rf * dI, rails); dp = 4 * Rf * dI quantized by the
    dot-product ADC; y = y_analog quantized by the output ADC. With
    quantized=False both values pass through unquantized (oracle mode).
    """
    v_in = np.asarray(inputs, dtype=float)
    if v_in.shape != (lc.n_in,):
        raise ConfigError(f"expected {lc.n_in} inputs, got shape {v_in.shape}", module="layer")
    bias = lc.vdd if bias_v is None else float(bias_v)
    lo, hi = lc.vss - 1e-12, lc.vdd + 1e-12
    if np.any(v_in < lo) or np.any(v_in > hi) or not (lo <= bias <= hi):
        raise ConfigError("layer inputs must lie within the op-amp rails", module="layer")

    drive = np.concatenate([v_in, [bias]])
    sol: NodeSolution = solve_jacobi(lc.xb, drive, solver or SolverConfig())
    di = sol.column_currents[0::2] - sol.column_currents[1::2]
    y_analog = np.clip(lc.rf * di, lc.vss, lc.vdd)
    dp_analog = 4.0 * lc.rf * di
    if quantized:
        return LayerOutput(y=quantize(y_analog, lc.out_quant),
                           dp=quantize(dp_analog, lc.dp_quant),
                           y_analog=y_analog)
    return LayerOutput(y=y_analog.copy(), dp=dp_analog, y_analog=y_analog)
