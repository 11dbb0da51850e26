"""Hierarchical floorplan and area/energy/latency cost model.

The chip is tiled per layer (tile capacity tile_dim x tile_dim cells),
tiles hold subarrays, BP arrays carry duplicated 90-degree-rotated
readout periphery (2x ADC and accumulation provisioning), DFA adds one
weight-gradient unit per layer plus a shared feedback master array.

Costs come from deterministic closed-form event counts per epoch; the
same counts can be cross-checked against the analog backend's live
event stream. The default unit-cost profile is calibrated so the
headline ratios hold (off-chip buffer energy share, buffer-dominated
latency, BP/DFA backward-latency scaling); absolute magnitudes are
model units, not fabbed-silicon numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .analog import CrossbarConfig, Event
from .network import Topology
from .training import TrainerKind

AREA_CATEGORIES = ("cim_cells", "adc", "ic", "accumulation", "wgu", "buffer", "other")
ENERGY_CATEGORIES = ("forward_reads", "backward_reads", "gradient_compute",
                     "writes", "buffer_on_chip", "buffer_off_chip")
LATENCY_PHASES = ("forward", "error_transport", "gradient_compute", "write", "buffering")

DEFAULT_TILE_DIM = 1024


@dataclass(frozen=True)
class UnitCosts:
    """Per-component cost constants (um^2 / pJ / ns, model units).

    ADC area and energy double per bit above 1. Off-chip buffer accesses
    cost `offchip_buffer_factor` times the on-chip per-bit figures.
    """

    profile: str = "default-v1"
    # area, um^2
    cell_area: float = 0.05
    adc_area_base: float = 1.0
    wgu_area_per_cell: float = 1.078
    ic_area_per_tile: float = 20000.0
    accum_area_per_subarray: float = 500.0
    buffer_area_per_byte: float = 0.01
    # energy, pJ
    cell_read_energy: float = 0.002
    adc_energy_base: float = 0.005
    wgu_energy_per_mac: float = 0.02
    write_energy_per_cell: float = 0.1
    buffer_energy_per_bit: float = 0.1
    offchip_buffer_factor: float = 100.0
    ic_energy_per_bit: float = 0.05
    # latency, ns
    read_latency: float = 9.0
    wgu_latency_per_mac: float = 0.001
    write_latency_per_cell: float = 1e-4
    buffer_latency_per_bit: float = 0.1
    onchip_buffer_latency_per_bit: float = 0.001
    ic_latency_per_bit: float = 0.05
    # buffer word width
    bits_per_value: int = 8

    def __post_init__(self):
        for f in fields(self):
            if f.type == "float" and getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")
        if self.offchip_buffer_factor <= 1:
            raise ValueError("off-chip buffer cost must exceed on-chip")

    def adc_area(self, bits: int) -> float:
        return self.adc_area_base * 2.0 ** (bits - 1)

    def adc_energy(self, bits: int) -> float:
        return self.adc_energy_base * 2.0 ** (bits - 1)


def write_unit_costs(uc: UnitCosts, path) -> None:
    """Profile file: `name = value` lines, comments with '#'."""
    with open(path, "w") as f:
        f.write("# cimtrain unit-cost profile\n")
        for fld in fields(uc):
            f.write(f"{fld.name} = {getattr(uc, fld.name)}\n")


def load_unit_costs(path) -> UnitCosts:
    values: dict = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'name = value'")
            name, raw = (part.strip() for part in line.split("=", 1))
            valid = {f.name: f for f in fields(UnitCosts)}
            if name not in valid:
                raise ValueError(f"{path}:{lineno}: unknown unit-cost field {name!r}")
            if name == "profile":
                values[name] = raw
            elif name == "bits_per_value":
                values[name] = int(raw)
            else:
                values[name] = float(raw)
    return UnitCosts(**values)


@dataclass(frozen=True)
class LayerPlan:
    layer: int
    d_out: int
    d_in: int
    subarray_grid: tuple[int, int]
    tile_grid: tuple[int, int]
    adc_count: int
    transposable: bool

    @property
    def n_subarrays(self) -> int:
        return self.subarray_grid[0] * self.subarray_grid[1]

    @property
    def n_tiles(self) -> int:
        return self.tile_grid[0] * self.tile_grid[1]

    @property
    def mapped_cells(self) -> int:
        return self.d_out * self.d_in


@dataclass(frozen=True)
class Floorplan:
    kind: TrainerKind
    layers: tuple[LayerPlan, ...]
    tile_dim: int
    cfg: CrossbarConfig
    wgu_count: int
    wgu_capacity_cells: int
    feedback_cells: int
    feedback_subarrays: int
    buffer_bytes: int

    @property
    def n_tiles(self) -> int:
        return sum(lp.n_tiles for lp in self.layers)

    @property
    def n_subarrays(self) -> int:
        return sum(lp.n_subarrays for lp in self.layers)

    @property
    def adc_count(self) -> int:
        return sum(lp.adc_count for lp in self.layers)

    @property
    def mapped_cells(self) -> int:
        return sum(lp.mapped_cells for lp in self.layers) + self.feedback_cells

    @property
    def provisioned_cells(self) -> int:
        sub = self.cfg.subarray_rows * self.cfg.subarray_cols
        return (self.n_tiles * self.tile_dim * self.tile_dim
                + self.feedback_subarrays * sub)

    @property
    def utilization(self) -> float:
        return self.mapped_cells / self.provisioned_cells


def build_floorplan(topology: Topology, kind: TrainerKind, cfg: CrossbarConfig,
                    tile_dim: int = DEFAULT_TILE_DIM) -> Floorplan:
    """Map every weight layer onto subarray and tile grids.

    BP marks every array transposable and provisions the duplicated,
    rotated ADC bank (exactly 2x the DFA count); DFA instead provisions
    one weight-gradient unit per layer and the shared feedback master
    (max hidden width x classes), which has no ADC bank of its own
    because error projection runs digitally on the WGUs.
    """
    kind = TrainerKind(kind)
    layers = []
    for i in range(1, topology.n_layers + 1):
        d_out, d_in = topology.weight_shape(i)
        sub_grid = cfg.subarray_grid(d_in, d_out)  # physical rows = input dim
        tile_grid = (-(-d_in // tile_dim), -(-d_out // tile_dim))
        adc = sub_grid[0] * sub_grid[1] * cfg.subarray_cols
        if kind is TrainerKind.BP:
            adc *= 2
        layers.append(LayerPlan(i, d_out, d_in, sub_grid, tile_grid, adc,
                                transposable=(kind is TrainerKind.BP)))

    n = topology.n_layers
    wgu_capacity = max(lp.mapped_cells for lp in layers)
    if kind is TrainerKind.DFA:
        wgu_count = n
        hidden = topology.hidden_dims
        fb_rows = max(hidden) if hidden else 0
        fb_cells = fb_rows * topology.n_classes
        fb_grid = cfg.subarray_grid(fb_rows, topology.n_classes) if fb_rows else (0, 0)
        fb_subarrays = fb_grid[0] * fb_grid[1]
    else:
        wgu_count = 1
        fb_cells = 0
        fb_subarrays = 0

    bytes_per_value = 1  # buffers move 8-bit words
    buffer_bytes = bytes_per_value * (wgu_capacity + 4 * sum(topology.layer_dims))
    return Floorplan(kind, tuple(layers), tile_dim, cfg, wgu_count, wgu_capacity,
                     fb_cells, fb_subarrays, buffer_bytes)


# ---------------------------------------------------------------------------
# closed-form event counts

@dataclass
class TrainingCounts:
    """Per-run totals of physical events, derived without simulating."""

    n_batches: int = 0           # batches per epoch
    epochs: int = 0
    batch_size: int = 0
    # reads
    fwd_read_events: int = 0     # vector x subarray read events
    fwd_conversions: int = 0
    fwd_cells_read: int = 0
    tread_events: int = 0        # BP only
    tread_conversions: int = 0
    tread_cells_read: int = 0
    # compute
    outer_macs: int = 0
    proj_macs: int = 0           # DFA only
    # writes
    write_events: int = 0        # subarray program events
    write_cells: int = 0
    # buffer traffic, in values (identical formulas for BP and DFA)
    offchip_values: int = 0
    onchip_values: int = 0
    broadcast_values: int = 0    # DFA error broadcast


def count_training_events(topology: Topology, kind: TrainerKind, cfg: CrossbarConfig,
                          batch_size: int, n_batches: int, epochs: int) -> TrainingCounts:
    """Deterministic per-run event totals (batches x per-batch events)."""
    kind = TrainerKind(kind)
    n = topology.n_layers
    c = topology.n_classes
    dims = topology.layer_dims
    tc = TrainingCounts(n_batches=n_batches, epochs=epochs, batch_size=batch_size)
    per_batch = n_batches * epochs * batch_size  # vectors over the whole run

    for i in range(1, n + 1):
        d_out, d_in = topology.weight_shape(i)
        gr, gc = cfg.subarray_grid(d_in, d_out)
        tc.fwd_read_events += per_batch * gr * gc
        tc.fwd_conversions += per_batch * 2 * gr * d_out  # both polarities
        tc.fwd_cells_read += per_batch * 2 * d_in * d_out
        tc.outer_macs += per_batch * d_out * d_in
        tc.write_events += n_batches * epochs * gr * gc
        tc.write_cells += n_batches * epochs * 2 * d_out * d_in

    if kind is TrainerKind.BP:
        for i in range(1, n):  # delta_i reads array i+1 transposed
            d_out, d_in = topology.weight_shape(i + 1)
            gr, gc = cfg.subarray_grid(d_in, d_out)
            tc.tread_events += per_batch * gr * gc
            # signed drive: two phases, each converting both polarity banks
            tc.tread_conversions += per_batch * 4 * gc * d_in
            tc.tread_cells_read += per_batch * 4 * d_in * d_out
    else:
        for i in range(1, n):
            tc.proj_macs += per_batch * dims[i] * c
        if n > 1:
            tc.broadcast_values = n_batches * epochs * batch_size * c

    # buffer traffic: input load, activation store+reload, delta store+load,
    # gradient store+load -- same formula for both rules
    values = dims[0] * batch_size  # input load
    for i in range(1, n + 1):
        d_out, d_in = topology.weight_shape(i)
        values += d_out * batch_size          # store h_i / logits
        values += d_in * batch_size           # reload h_{i-1} for the gradient
        values += 2 * d_out * batch_size      # delta store + load
        values += 2 * d_out * d_in            # gradient store + load
    tc.offchip_values = values * n_batches * epochs
    tc.onchip_values = values * n_batches * epochs
    return tc


def _layer_traffic_values(topology: Topology, i: int, batch_size: int) -> tuple[int, int]:
    """(forward, backward) buffer values attributable to layer i, per batch."""
    d_out, d_in = topology.weight_shape(i)
    fwd = d_out * batch_size + (d_in * batch_size if i == 1 else 0)
    bwd = d_in * batch_size + 2 * d_out * batch_size + 2 * d_out * d_in
    return fwd, bwd


# ---------------------------------------------------------------------------
# reports

@dataclass
class CostReport:
    area: dict
    energy: dict
    latency: dict
    area_total: float
    energy_total: float
    latency_total: float
    feedback_cell_area: float
    utilization: float
    extension: bool = False        # BP-on-analog runs beyond the measured scope

    def to_json_dict(self) -> dict:
        return {
            "area_um2": {**self.area, "total": self.area_total,
                         "feedback_cells": self.feedback_cell_area},
            "energy_pJ": {**self.energy, "total": self.energy_total},
            "latency_ns": {**self.latency, "total": self.latency_total},
            "utilization": self.utilization,
            "extension": self.extension,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write("metric,category,value\n")
            for cat in AREA_CATEGORIES:
                f.write(f"area_um2,{cat},{self.area[cat]:.10g}\n")
            f.write(f"area_um2,total,{self.area_total:.10g}\n")
            for cat in ENERGY_CATEGORIES:
                f.write(f"energy_pJ,{cat},{self.energy[cat]:.10g}\n")
            f.write(f"energy_pJ,total,{self.energy_total:.10g}\n")
            for cat in LATENCY_PHASES:
                f.write(f"latency_ns,{cat},{self.latency[cat]:.10g}\n")
            f.write(f"latency_ns,total,{self.latency_total:.10g}\n")
            f.write(f"utilization,overall,{self.utilization:.10g}\n")


def estimate_area(fp: Floorplan, uc: UnitCosts) -> dict:
    """Area by category; feedback cells reported as a named sub-line."""
    bits = fp.cfg.adc_bits if fp.cfg.adc_bits is not None else 16
    sub = fp.cfg.subarray_rows * fp.cfg.subarray_cols
    cim = (fp.n_subarrays + fp.feedback_subarrays) * sub * uc.cell_area
    accum_mult = 2.0 if fp.kind is TrainerKind.BP else 1.0
    area = {
        "cim_cells": cim,
        "adc": fp.adc_count * uc.adc_area(bits),
        "ic": fp.n_tiles * uc.ic_area_per_tile,
        "accumulation": accum_mult * fp.n_subarrays * uc.accum_area_per_subarray,
        "wgu": fp.wgu_count * fp.wgu_capacity_cells * uc.wgu_area_per_cell,
        "buffer": fp.buffer_bytes * uc.buffer_area_per_byte,
        "other": 0.0,
    }
    area["feedback_cells"] = fp.feedback_subarrays * sub * uc.cell_area
    return area


def estimate_energy(fp: Floorplan, uc: UnitCosts, tc: TrainingCounts) -> dict:
    bits = fp.cfg.adc_bits if fp.cfg.adc_bits is not None else 16
    bpv = uc.bits_per_value
    return {
        "forward_reads": (tc.fwd_cells_read * uc.cell_read_energy
                          + tc.fwd_conversions * uc.adc_energy(bits)),
        "backward_reads": (tc.tread_cells_read * uc.cell_read_energy
                           + tc.tread_conversions * uc.adc_energy(bits)),
        "gradient_compute": (tc.outer_macs + tc.proj_macs) * uc.wgu_energy_per_mac,
        "writes": tc.write_cells * uc.write_energy_per_cell,
        "buffer_on_chip": tc.onchip_values * bpv * uc.buffer_energy_per_bit,
        "buffer_off_chip": (tc.offchip_values * bpv * uc.buffer_energy_per_bit
                            * uc.offchip_buffer_factor),
    }


def estimate_latency(fp: Floorplan, uc: UnitCosts, tc: TrainingCounts,
                     topology: Topology) -> dict:
    """Latency by phase, honoring the parallelization structure.

    Forward is sequential over layers for both rules. BP's backward sums
    per-layer bundles (transposed read + gradient compute + write +
    buffer traffic); DFA takes the max bundle across layers (projection
    instead of transposed read) plus one error broadcast, since separate
    layers use separate WGUs and DRAM blocks.
    """
    n = topology.n_layers
    c = topology.n_classes
    batch = tc.batch_size
    runs = tc.n_batches * tc.epochs  # batch iterations over the run
    bpv = uc.bits_per_value
    buf_ns = uc.buffer_latency_per_bit + uc.onchip_buffer_latency_per_bit

    phases = {p: 0.0 for p in LATENCY_PHASES}
    if runs == 0 or tc.epochs == 0:
        return phases

    # forward: reads sequential over layers, traffic through the buffer
    fwd_traffic = 0
    for i in range(1, n + 1):
        phases["forward"] += batch * uc.read_latency
        fwd_traffic += _layer_traffic_values(topology, i, batch)[0]
    phases["buffering"] += fwd_traffic * bpv * buf_ns

    # per-layer backward bundles
    bundles = []
    for i in range(1, n + 1):
        d_out, d_in = topology.weight_shape(i)
        transport = 0.0
        if i < n:
            if fp.kind is TrainerKind.BP:
                transport = batch * uc.read_latency          # transposed read
            else:
                transport = topology.layer_dims[i] * c * batch * uc.wgu_latency_per_mac
        grad = d_out * d_in * batch * uc.wgu_latency_per_mac
        write = 2 * d_out * d_in * uc.write_latency_per_cell
        traffic = _layer_traffic_values(topology, i, batch)[1] * bpv * buf_ns
        bundles.append((transport, grad, write, traffic))

    if fp.kind is TrainerKind.BP:
        for transport, grad, write, traffic in bundles:
            phases["error_transport"] += transport
            phases["gradient_compute"] += grad
            phases["write"] += write
            phases["buffering"] += traffic
    else:
        top = max(bundles, key=sum)
        broadcast = c * batch * bpv * uc.ic_latency_per_bit if n > 1 else 0.0
        phases["error_transport"] += top[0] + broadcast
        phases["gradient_compute"] += top[1]
        phases["write"] += top[2]
        phases["buffering"] += top[3]

    return {p: v * runs for p, v in phases.items()}


def backward_latency(fp: Floorplan, uc: UnitCosts, tc: TrainingCounts,
                     topology: Topology) -> float:
    """Backward-phase latency alone (error transport + gradient + write +
    backward buffering), for the BP/DFA scaling-law comparison."""
    phases = estimate_latency(fp, uc, tc, topology)
    fwd_traffic = sum(_layer_traffic_values(topology, i, tc.batch_size)[0]
                      for i in range(1, topology.n_layers + 1))
    fwd_buf = (fwd_traffic * uc.bits_per_value
               * (uc.buffer_latency_per_bit + uc.onchip_buffer_latency_per_bit)
               * tc.n_batches * tc.epochs)
    return (phases["error_transport"] + phases["gradient_compute"]
            + phases["write"] + phases["buffering"] - fwd_buf)


def build_cost_report(topology: Topology, kind: TrainerKind, cfg: CrossbarConfig,
                      uc: UnitCosts, batch_size: int, n_batches: int, epochs: int,
                      tile_dim: int = DEFAULT_TILE_DIM,
                      analog_backend: bool = False) -> CostReport:
    kind = TrainerKind(kind)
    fp = build_floorplan(topology, kind, cfg, tile_dim)
    tc = count_training_events(topology, kind, cfg, batch_size, n_batches, epochs)
    area = estimate_area(fp, uc)
    fb_area = area.pop("feedback_cells")
    energy = estimate_energy(fp, uc, tc)
    latency = estimate_latency(fp, uc, tc, topology)
    return CostReport(
        area=area,
        energy=energy,
        latency=latency,
        area_total=sum(area.values()),
        energy_total=sum(energy.values()),
        latency_total=sum(latency.values()),
        feedback_cell_area=fb_area,
        utilization=fp.utilization,
        extension=(kind is TrainerKind.BP and analog_backend),
    )


class EventTally:
    """Observer accumulating live backend events for cross-checking the
    closed-form counts: reads tally vector x subarray events, writes tally
    subarray program events, gradient computes tally MACs."""

    def __init__(self):
        self.reads: dict[int, int] = {}
        self.treads: dict[int, int] = {}
        self.writes: dict[int, int] = {}
        self.macs: dict[int, int] = {}

    def __call__(self, event: Event) -> None:
        if event.kind == "forward_read":
            self.reads[event.layer] = (self.reads.get(event.layer, 0)
                                       + event.vectors * event.subarrays)
        elif event.kind == "transposed_read":
            self.treads[event.layer] = (self.treads.get(event.layer, 0)
                                        + event.vectors * event.subarrays)
        elif event.kind == "program_write":
            self.writes[event.layer] = self.writes.get(event.layer, 0) + event.subarrays
        elif event.kind == "gradient_compute":
            self.macs[event.layer] = self.macs.get(event.layer, 0) + event.macs

    def total(self, counter: str) -> int:
        return sum(getattr(self, counter).values())
