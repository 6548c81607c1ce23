"""Generalized memristor device model.

Conduction is hyperbolic-sine in voltage and linear in the internal state
variable x; state motion is gated by voltage thresholds (exponential drive
above threshold, zero below) and damped near the state boundaries by
exponential window functions. The default parameter set gives a 10 kOhm
minimum resistance, a 1e3 resistance ratio, and a full-range switch in
roughly 20 us at 2.5 V.

All functions here are pure; state updates return new values. Array
arguments broadcast, so the crossbar and training code can drive whole
grids of devices through the same physics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

X_FLOOR_DEFAULT = 0.001


@dataclass(frozen=True)
class DeviceParams:
    """Device constants. Rates in 1/s, conduction scales in A, b in 1/V."""

    vp: float = 1.3        # positive write threshold, V
    vn: float = 1.3        # negative write threshold magnitude, V
    ap: float = 5800.0     # positive drive rate
    an: float = 5800.0     # negative drive rate
    xp: float = 0.9995     # window onset approaching x = 1
    xn: float = 0.9995     # window onset approaching x = 0 (active below 1 - xn)
    alpha_p: float = 3.0   # window decay exponent, positive motion
    alpha_n: float = 3.0   # window decay exponent, negative motion
    a1: float = 0.002      # conduction scale for V >= 0
    a2: float = 0.002      # conduction scale for V < 0
    b: float = 0.05        # sinh argument scale
    x0: float = 0.001      # initial state

    def __post_init__(self):
        positive = {
            "vp": self.vp, "vn": self.vn, "ap": self.ap, "an": self.an,
            "alpha_p": self.alpha_p, "alpha_n": self.alpha_n,
            "a1": self.a1, "a2": self.a2, "b": self.b,
        }
        for name, value in positive.items():
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"DeviceParams.{name} must be finite and > 0, got {value}",
                                  module="device")
        for name, value in (("xp", self.xp), ("xn", self.xn), ("x0", self.x0)):
            if not (0.0 < value < 1.0):
                raise ConfigError(f"DeviceParams.{name} must lie in (0, 1), got {value}",
                                  module="device")

    @property
    def min_threshold(self) -> float:
        return min(self.vp, self.vn)


@dataclass(frozen=True)
class MemristorState:
    """State variable x, clamped to [x_floor, 1] by every operation."""

    x: float
    x_floor: float = X_FLOOR_DEFAULT

    def __post_init__(self):
        if not (0.0 < self.x_floor <= 1.0):
            raise ConfigError(f"x_floor must lie in (0, 1], got {self.x_floor}", module="device")
        if not (self.x_floor <= self.x <= 1.0):
            raise ConfigError(
                f"state x={self.x} outside [{self.x_floor}, 1]", module="device")

    def resistance(self, p: DeviceParams) -> float:
        return small_signal_resistance(p, self.x)


def _check_finite(**values):
    for name, v in values.items():
        if not np.all(np.isfinite(v)):
            raise ConfigError(f"{name} must be finite, got {v}", module="device")


def device_current(p: DeviceParams, x, v):
    """Static I-V relation: a * x * sinh(b*V), with a = a1 for V >= 0 else a2.

    Odd in V when a1 == a2 and exactly linear in x.
    """
    _check_finite(x=x, v=v)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ConfigError("state x outside [0, 1]", module="device")
    scale = np.where(v >= 0.0, p.a1, p.a2)
    out = scale * x * np.sinh(p.b * v)
    return float(out) if out.ndim == 0 else out


def small_signal_resistance(p: DeviceParams, x) -> float:
    """V -> 0 limit of V/I: 1 / (a1 * b * x)."""
    _check_finite(x=x)
    if np.any(np.asarray(x) <= 0.0):
        raise ConfigError(f"resistance undefined for x <= 0, got {x}", module="device")
    out = 1.0 / (p.a1 * p.b * np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def conductance(p: DeviceParams, x):
    """Linearized (small-signal) conductance a1 * b * x."""
    return p.a1 * p.b * np.asarray(x, dtype=float)


def threshold_drive(p: DeviceParams, v):
    """Voltage-dependent motion drive g(V).

    Zero inside [-vn, vp]; exponential beyond either threshold.
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    pos = v > p.vp
    neg = v < -p.vn
    if np.any(pos):
        out = np.where(pos, p.ap * (np.exp(np.where(pos, v, 0.0)) - math.exp(p.vp)), out)
    if np.any(neg):
        out = np.where(neg, -p.an * (np.exp(np.where(neg, -v, 0.0)) - math.exp(p.vn)), out)
    return float(out) if out.ndim == 0 else out


def motion_window(p: DeviceParams, x, v):
    """Boundary window f(x): free motion mid-range, exponential damping
    once x passes xp (rising) or drops under 1 - xn (falling). The rising
    window reaches exactly zero at x = 1."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    wp = np.exp(-p.alpha_p * (x - p.xp)) * ((p.xp - x) / (1.0 - p.xp) + 1.0)
    wn = np.exp(p.alpha_n * (x + p.xn - 1.0)) * (x / (1.0 - p.xn))
    up = np.where(x < p.xp, 1.0, wp)
    down = np.where(x > 1.0 - p.xn, 1.0, wn)
    out = np.where(v > 0.0, up, np.where(v < 0.0, down, 1.0))
    return float(out) if out.ndim == 0 else out


def state_derivative(p: DeviceParams, x, v):
    """dx/dt = g(V) * f(x). Zero for |V| inside the threshold band."""
    _check_finite(x=x, v=v)
    out = threshold_drive(p, v) * motion_window(p, x, v)
    return float(out) if np.ndim(out) == 0 else out


def apply_pulse(p: DeviceParams, s: MemristorState, v: float, duration: float,
                dt: float = 1e-8) -> MemristorState:
    """Integrate the state under a constant-voltage pulse.

    Fixed-step explicit Euler with the final step shortened to land exactly
    on ``duration``; x is clamped to [x_floor, 1] after every step. A zero
    duration or a sub-threshold voltage returns the input state unchanged.
    """
    _check_finite(v=v, duration=duration)
    if duration < 0:
        raise ConfigError(f"pulse duration must be >= 0, got {duration}", module="device")
    if duration == 0.0:
        return s
    if not (dt > 0):
        raise ConfigError(f"dt must be > 0 for a finite pulse, got {dt}", module="device")
    if threshold_drive(p, v) == 0.0:
        return s

    g = float(threshold_drive(p, v))
    x = s.x
    n_full, remainder = divmod(duration, dt)
    for _ in range(int(n_full)):
        x = min(max(x + dt * g * motion_window(p, x, v), s.x_floor), 1.0)
    if remainder > 0.0:
        x = min(max(x + remainder * g * motion_window(p, x, v), s.x_floor), 1.0)
    return replace(s, x=x)


def integrate_pulse_grid(p: DeviceParams, x: np.ndarray, v: np.ndarray,
                         durations: np.ndarray, dt: float,
                         x_floor: float = X_FLOOR_DEFAULT):
    """Vectorized pulse integration over a grid of devices.

    Each device sees its own constant voltage and duration. Durations are
    split into a common number of substeps bounded by ``dt`` so the window
    function is tracked near the clamps; in the free-motion band the result
    is exact regardless of step count.

    Returns (new_states, saturated_count).
    """
    v = np.asarray(v, dtype=float)
    durations = np.asarray(durations, dtype=float)
    if np.any(durations < 0):
        raise ConfigError("pulse durations must be >= 0", module="device")
    g = threshold_drive(p, v)
    active = (durations > 0) & (g != 0.0)
    if not np.any(active):
        return x.copy(), 0

    longest = float(durations.max())
    n_sub = max(1, min(int(math.ceil(longest / dt)), 10_000))
    h = np.where(active, durations / n_sub, 0.0)
    out = x.astype(float, copy=True)
    for _ in range(n_sub):
        out += h * g * motion_window(p, out, v)
        np.clip(out, x_floor, 1.0, out=out)
    saturated = int(np.count_nonzero(active & (((out >= 1.0) & (g > 0)) |
                                               ((out <= x_floor) & (g < 0)))))
    return out, saturated


def switch_time(p: DeviceParams, v: float, x_start: float, x_target: float,
                dt: float = 1e-8, t_max: float = 1e-3) -> float:
    """Time for a constant pulse to first drive the state past x_target.

    Returns inf if the target is not reached within t_max.
    """
    s = MemristorState(x=x_start)
    g = float(threshold_drive(p, v))
    if g == 0.0:
        return math.inf
    x = s.x
    t = 0.0
    rising = g > 0
    while t < t_max:
        if (rising and x >= x_target) or (not rising and x <= x_target):
            return t
        x = min(max(x + dt * g * motion_window(p, x, v), s.x_floor), 1.0)
        t += dt
    return math.inf
