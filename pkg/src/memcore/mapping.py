"""Network-to-core planning.

A core hosts one 400-input x 100-neuron crossbar (one input slot is the
bias row, so 399 data inputs). Layers that exceed the limits are split:
too many neurons is a plain output split; too many inputs partitions the
input vector into contiguous balanced blocks, gives every original neuron
one partial sub-neuron per block, and adds one combining neuron per
original neuron fed by its partials. The transformed topology is what
actually gets trained.

Packing is greedy first-fit over units in pipeline order: consecutive
units share a core while the summed neuron count and per-unit fan-in fit,
with same-core edges flowing through the core's routing switch. Cores are
placed row-major on a 2-D mesh and routes follow X-then-Y static paths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigError

MESH_DEFAULT = (24, 24)
OUTPUT_BITS = 3   # neuron outputs travel as 3-bit codes
LINK_BITS = 8     # mesh link width per transfer


@dataclass(frozen=True)
class CoreLimits:
    max_inputs: int = 400    # crossbar rows, bias included
    max_neurons: int = 100

    def __post_init__(self):
        if self.max_inputs < 2 or self.max_neurons < 1:
            raise ConfigError(
                f"core limits too small: {self.max_inputs} inputs, {self.max_neurons} neurons",
                module="map")

    @property
    def max_data_inputs(self) -> int:
        return self.max_inputs - 1   # one row reserved for bias


@dataclass
class SubLayer:
    uid: int
    layer_index: int                 # original layer, 1-based
    kind: str                        # "slice" | "partial" | "combine"
    neuron_start: int                # original neuron ids covered
    neuron_stop: int
    in_index: np.ndarray             # indices into the previous stage's output
    block: int = 0                   # input block id for partials

    @property
    def width(self) -> int:
        return self.neuron_stop - self.neuron_start

    @property
    def fan_in(self) -> int:
        return int(self.in_index.size)


@dataclass
class SplitPlan:
    original_topology: list
    stages: list                     # list of lists of SubLayer
    limits: CoreLimits

    @property
    def units(self) -> list:
        return [u for stage in self.stages for u in stage]

    @property
    def transformed_topology(self) -> list:
        return [self.original_topology[0]] + [sum(u.width for u in st) for st in self.stages]

    def is_identity(self) -> bool:
        """True when no layer needed splitting."""
        if len(self.stages) != len(self.original_topology) - 1:
            return False
        return all(len(st) == 1 and st[0].kind == "slice" for st in self.stages)

    def final_units_by_layer(self) -> dict:
        """Units whose outputs stand for original neurons (provenance)."""
        out: dict = {}
        for stage in self.stages:
            for u in stage:
                if u.kind in ("slice", "combine"):
                    out.setdefault(u.layer_index, []).append(u)
        return out


def _balanced_blocks(total: int, max_size: int) -> list:
    """Contiguous (start, stop) blocks, sizes within one of each other."""
    count = math.ceil(total / max_size)
    base, rem = divmod(total, count)
    sizes = [base + 1] * rem + [base] * (count - rem)
    bounds = []
    start = 0
    for s in sizes:
        bounds.append((start, start + s))
        start += s
    return bounds


def split_network(topology, limits: CoreLimits | None = None) -> SplitPlan:
    limits = limits or CoreLimits()
    topo = [int(w) for w in topology]
    if len(topo) < 2 or any(w < 1 for w in topo):
        raise ConfigError(f"invalid topology {topo}", module="map")

    max_in = limits.max_data_inputs
    max_n = limits.max_neurons
    stages = []
    uid = 0
    for layer, (fan_in, width) in enumerate(zip(topo, topo[1:]), start=1):
        if fan_in <= max_in:
            stage = []
            for ns, ne in _balanced_blocks(width, max_n):
                stage.append(SubLayer(uid, layer, "slice", ns, ne, np.arange(fan_in)))
                uid += 1
            stages.append(stage)
            continue

        blocks = _balanced_blocks(fan_in, max_in)
        n_blocks = len(blocks)
        chunks = _balanced_blocks(width, max_n)
        partial_stage = []
        for b, (bs, be) in enumerate(blocks):
            for ns, ne in chunks:
                partial_stage.append(
                    SubLayer(uid, layer, "partial", ns, ne, np.arange(bs, be), block=b))
                uid += 1
        stages.append(partial_stage)

        # Partial outputs are laid out block-major, so original neuron n of
        # block b sits at position b*width + n.
        combine_cap = min(max_n, max_in // n_blocks)
        if combine_cap < 1:
            raise CapacityError(
                f"layer {layer} needs {n_blocks} input blocks; a combining neuron's "
                f"fan-in exceeds the {max_in}-input core", module="map")
        combine_stage = []
        for ns, ne in _balanced_blocks(width, combine_cap):
            gather = np.array([b * width + n for n in range(ns, ne) for b in range(n_blocks)])
            combine_stage.append(SubLayer(uid, layer, "combine", ns, ne, gather))
            uid += 1
        stages.append(combine_stage)

    plan = SplitPlan(topo, stages, limits)
    _validate_plan(plan)
    return plan


def _validate_plan(plan: SplitPlan) -> None:
    max_in = plan.limits.max_data_inputs
    for u in plan.units:
        if u.fan_in > max_in or u.width > plan.limits.max_neurons:
            raise ConfigError(
                f"unit {u.uid} violates limits: fan-in {u.fan_in}, width {u.width}",
                module="map")
    finals = plan.final_units_by_layer()
    for layer, width in enumerate(plan.original_topology[1:], start=1):
        covered = sorted((u.neuron_start, u.neuron_stop) for u in finals.get(layer, []))
        pos = 0
        for s, e in covered:
            if s != pos:
                raise ConfigError(f"layer {layer} provenance has a gap at {pos}", module="map")
            pos = e
        if pos != width:
            raise ConfigError(f"layer {layer} provenance covers {pos} of {width} neurons",
                              module="map")


def eval_split_linear(plan: SplitPlan, weight_matrices, x) -> np.ndarray:
    """Linear-activation diagnostic evaluation of the transformed topology.

    weight_matrices holds one (fan_in, width) matrix per original layer;
    combining units sum their partials exactly. Used to check that the
    split bookkeeping preserves the original function.
    """
    prev = np.asarray(x, dtype=float)
    if prev.shape != (plan.original_topology[0],):
        raise ConfigError("input width does not match the plan", module="map")
    for stage in plan.stages:
        outs = []
        for u in stage:
            xin = prev[u.in_index]
            if u.kind == "combine":
                outs.append(xin.reshape(u.width, -1).sum(axis=1))
            else:
                w = np.asarray(weight_matrices[u.layer_index - 1], dtype=float)
                if u.kind == "partial":
                    rows = u.in_index
                    outs.append(w[rows[0]:rows[-1] + 1, u.neuron_start:u.neuron_stop].T @ xin)
                else:
                    outs.append(w[:, u.neuron_start:u.neuron_stop].T @ xin)
        prev = np.concatenate(outs)
    return prev


@dataclass
class Route:
    src_core: int
    dst_core: int
    src_unit: int
    dst_unit: int
    neurons: int
    hops: int = 0
    link_transfers: int = 0


@dataclass
class CorePlan:
    limits: CoreLimits
    mesh: tuple
    cores: list                      # list of lists of unit uids
    placements: list                 # (row, col) per core
    routes: list                     # Route entries
    plan: SplitPlan

    @property
    def n_cores(self) -> int:
        return len(self.cores)

    def core_of(self, uid: int) -> int:
        for cid, units in enumerate(self.cores):
            if uid in units:
                return cid
        raise ConfigError(f"unit {uid} not packed", module="map")

    def to_dict(self) -> dict:
        units = {u.uid: u for u in self.plan.units}
        return {
            "mesh": list(self.mesh),
            "limits": {"max_inputs": self.limits.max_inputs,
                       "max_neurons": self.limits.max_neurons},
            "original_topology": self.plan.original_topology,
            "transformed_topology": self.plan.transformed_topology,
            "n_cores": self.n_cores,
            "cores": [
                {
                    "id": cid,
                    "mesh_position": list(self.placements[cid]),
                    "units": [
                        {
                            "uid": uid,
                            "layer": units[uid].layer_index,
                            "kind": units[uid].kind,
                            "neurons": [units[uid].neuron_start, units[uid].neuron_stop],
                            "fan_in": units[uid].fan_in,
                            "block": units[uid].block,
                        }
                        for uid in self.cores[cid]
                    ],
                }
                for cid in range(self.n_cores)
            ],
            "routes": [
                {
                    "src_core": r.src_core, "dst_core": r.dst_core,
                    "src_unit": r.src_unit, "dst_unit": r.dst_unit,
                    "neurons": r.neurons, "hops": r.hops,
                    "link_transfers": r.link_transfers,
                }
                for r in self.routes
            ],
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def pack_cores(plan: SplitPlan, limits: CoreLimits | None = None,
               mesh: tuple = MESH_DEFAULT) -> CorePlan:
    """First-fit packing of units in pipeline order, then placement and
    static routing."""
    limits = limits or plan.limits
    cores: list = []
    neurons_in_core = 0
    for u in plan.units:
        fits = (cores
                and neurons_in_core + u.width <= limits.max_neurons
                and u.fan_in + 1 <= limits.max_inputs)
        if fits:
            cores[-1].append(u.uid)
            neurons_in_core += u.width
        else:
            cores.append([u.uid])
            neurons_in_core = u.width

    capacity = mesh[0] * mesh[1]
    if len(cores) > capacity:
        raise CapacityError(
            f"plan needs {len(cores)} cores but the {mesh[0]}x{mesh[1]} mesh holds "
            f"{capacity}; short by {len(cores) - capacity}", module="map")

    placements = [(k // mesh[1], k % mesh[1]) for k in range(len(cores))]
    cp = CorePlan(limits=limits, mesh=tuple(mesh), cores=cores,
                  placements=placements, routes=_build_routes(plan, cores), plan=plan)
    return route_plan(cp)


def _build_routes(plan: SplitPlan, cores: list) -> list:
    core_of = {}
    for cid, unit_ids in enumerate(cores):
        for uid in unit_ids:
            core_of[uid] = cid

    routes = []
    for prev_stage, stage in zip(plan.stages, plan.stages[1:]):
        # Producer units own contiguous ranges of the stage output vector.
        ranges = []
        offset = 0
        for u in prev_stage:
            ranges.append((u, offset, offset + u.width))
            offset += u.width
        for consumer in stage:
            idx = consumer.in_index
            for producer, lo, hi in ranges:
                used = int(np.count_nonzero((idx >= lo) & (idx < hi)))
                if used:
                    routes.append(Route(src_core=core_of[producer.uid],
                                        dst_core=core_of[consumer.uid],
                                        src_unit=producer.uid, dst_unit=consumer.uid,
                                        neurons=used))
    return routes


def route_plan(cp: CorePlan) -> CorePlan:
    """Populate hop counts (X-then-Y Manhattan paths) and per-link
    transfer counts for every route."""
    for r in cp.routes:
        src = cp.placements[r.src_core]
        dst = cp.placements[r.dst_core]
        r.hops = abs(src[0] - dst[0]) + abs(src[1] - dst[1])
        r.link_transfers = math.ceil(r.neurons * OUTPUT_BITS / LINK_BITS)
    return cp
