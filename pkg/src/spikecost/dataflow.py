"""Tile-level traffic simulator for the temporal weight-stationary dataflow.

Each PE owns one output channel's filter for a whole pass over the layer
(every output position and every timestep), so filters cross DRAM, the GLB
and the filter scratchpad exactly once. Inputs stream DRAM -> GLB -> array
once as packed spike words, and every output potential moves
PE -> GLB -> DRAM once per timestep. Every value that passes through the
GLB is counted as one write plus one read.

Forward DRAM and GLB traffic is derived from the schedule and should agree
with the analytic counts term by term. Backward and weight-update traffic
follows the stage descriptions with the schedule mirrored onto transposed
filters; where the analytic table uses a bare constant (7x in bwd GLB,
2(1+T) in wup GLB) the simulated value is reported next to it, not forced
to match. Scratchpad counts here are physical (one filter read per
executed MAC), which is a different convention from the table's, so the
crosscheck labels them as such.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .counts import STAGES, OpCounts
from .errors import CapacityError, InputDomainError, StructuralError
from .network import LayerDims


@dataclass(frozen=True)
class PeArrayConfig:
    pe_count: int = 128
    pgu_count: int = 128
    filter_spad_bytes: int = 128 * 9 * 8 // 8
    input_spad_bytes: int = 1152
    psum_spad_bytes: int = 64
    bitwidth: int = 8

    def __post_init__(self):
        if self.pe_count < 1 or self.pgu_count < 1 or self.bitwidth < 1:
            raise InputDomainError("pe_count, pgu_count and bitwidth must be >= 1")
        for name in ("filter_spad_bytes", "input_spad_bytes", "psum_spad_bytes"):
            if getattr(self, name) <= 0:
                raise InputDomainError(f"{name} must be positive")


@dataclass(frozen=True)
class LayerSchedule:
    """Iteration plan for one layer.

    ``passes`` channel groups of at most ``pe_count`` filters run one after
    another. Filters deeper than the filter scratchpad are split into
    ``c_chunks`` input-channel chunks. For single-position (FC) layers each
    input chunk stays in the array while all passes consume it; for conv
    layers the partial potentials of every chunk but the last round-trip
    through the GLB. ``t_chunks`` splits the T-deep receptive fields when
    they overflow the input scratchpad.
    """

    dims: LayerDims
    T: int
    stride: int
    pad: int
    passes: int
    pe_active: tuple[int, ...]
    c_chunks: int
    t_chunks: int
    bitwidth: int = 8

    @property
    def positions(self) -> int:
        return self.dims.E ** 2

    def tiles(self) -> Iterator[tuple[int, int, int]]:
        """(pass, row, col) in row-major order; filters are swapped only between passes."""
        E = self.dims.E
        for p in range(self.passes):
            for y in range(E):
                for x in range(E):
                    yield p, y, x


def schedule_layer(dims: LayerDims, arch: PeArrayConfig, T: int, stride: int = 1,
                   pad: Optional[int] = None) -> LayerSchedule:
    if T < 1:
        raise InputDomainError("T must be >= 1")
    if pad is None:
        pad = dims.R // 2 if dims.E > 1 or dims.H > 1 else 0
    word_bytes = arch.bitwidth / 8
    kernel_bytes = dims.R ** 2 * word_bytes
    if kernel_bytes > arch.filter_spad_bytes:
        raise CapacityError(f"{dims.name}: one filter channel", int(math.ceil(kernel_bytes)),
                            arch.filter_spad_bytes)
    per_chunk = int(arch.filter_spad_bytes // kernel_bytes)
    c_chunks = math.ceil(dims.C / per_chunk)
    field_bytes = T * dims.C * dims.R ** 2 / 8 / c_chunks
    t_chunks = max(1, math.ceil(field_bytes / arch.input_spad_bytes))
    passes = math.ceil(dims.K / arch.pe_count)
    pe_active = tuple(min(arch.pe_count, dims.K - p * arch.pe_count) for p in range(passes))
    return LayerSchedule(dims, T, stride, pad, passes, pe_active, c_chunks, t_chunks, arch.bitwidth)


@dataclass
class BufferTraffic:
    dram_reads: float = 0.0
    dram_writes: float = 0.0
    glb_reads: float = 0.0
    glb_writes: float = 0.0
    spad_reads: float = 0.0
    spad_writes: float = 0.0

    def total(self, buffer: str) -> float:
        return getattr(self, f"{buffer}_reads") + getattr(self, f"{buffer}_writes")

    def via_glb(self, words: float, from_dram: bool) -> None:
        """Move ``words`` between DRAM and the array through the GLB."""
        self.glb_writes += words
        self.glb_reads += words
        if from_dram:
            self.dram_reads += words
        else:
            self.dram_writes += words


@dataclass
class TrafficTrace:
    entries: dict[tuple[str, str], BufferTraffic] = field(default_factory=dict)
    schedules: dict[str, LayerSchedule] = field(default_factory=dict)

    def add(self, layer: str, stage: str, traffic: BufferTraffic, schedule: LayerSchedule) -> None:
        self.entries[(layer, stage)] = traffic
        self.schedules[layer] = schedule

    @property
    def layers(self) -> list[str]:
        return list(dict.fromkeys(name for name, _ in self.entries))


def _taps(n_out: int, n_in: int, R: int, stride: int, pad: int) -> np.ndarray:
    """Number of kernel taps landing inside the input, per output coordinate (1-D)."""
    start = np.arange(n_out) * stride - pad
    lo = np.maximum(start, 0)
    hi = np.minimum(start + R, n_in)
    return np.maximum(hi - lo, 0)


def _fwd_macs(s: LayerSchedule, spikes: Optional[np.ndarray]) -> float:
    d = s.dims
    if spikes is None:
        taps = _taps(d.E, d.H, d.R, s.stride, s.pad)
        return float(s.T * d.K * d.C * taps.sum() ** 2)
    x = np.pad(spikes != 0, ((0, 0), (0, 0), (s.pad, s.pad), (s.pad, s.pad))).astype(np.int64)
    win = sliding_window_view(x, (d.R, d.R), axis=(2, 3))[:, :, ::s.stride, ::s.stride][:, :, :d.E, :d.E]
    return float(d.K * win.sum())


def _bwd_macs(s: LayerSchedule, grad_u: Optional[np.ndarray]) -> float:
    d = s.dims
    t = _taps(d.E, d.H, d.R, s.stride, s.pad)
    taps = np.outer(t, t)
    if grad_u is None:
        return float(s.T * d.K * d.C * taps.sum())
    return float(d.C * ((grad_u != 0) * taps).sum())


def _check_mask(name: str, mask: Optional[np.ndarray], shape: tuple[int, ...]) -> Optional[np.ndarray]:
    if mask is None:
        return None
    mask = np.asarray(mask)
    if mask.shape != shape:
        raise StructuralError(f"{name} mask has shape {mask.shape}, expected {shape}")
    return mask


def simulate_traffic(schedule: LayerSchedule, stage: str, masks: Optional[dict] = None,
                     log: Optional[Callable[[str], None]] = None) -> BufferTraffic:
    """Count accesses for one layer and stage.

    ``masks`` may hold ``spikes`` (T, C, H, H) input spikes gating fwd/wup
    MACs, ``grad_u`` (T, K, E, E) non-zero potential gradients gating bwd
    MACs, and ``grad_f`` (T, K, E, E) valid firing gradients gating the
    gradient unit's potential reads.
    """
    if stage not in STAGES:
        raise InputDomainError(f"stage must be one of {STAGES}")
    d, T = schedule.dims, schedule.T
    masks = masks or {}
    spikes = _check_mask("spikes", masks.get("spikes"), (T, d.C, d.H, d.H))
    grad_u = _check_mask("grad_u", masks.get("grad_u"), (T, d.K, d.E, d.E))
    grad_f = _check_mask("grad_f", masks.get("grad_f"), (T, d.K, d.E, d.E))
    b = schedule.bitwidth
    w, n, x = d.weights, d.neurons, d.inputs
    spike_words = math.ceil(T * x / b)
    tr = BufferTraffic()

    if stage == "fwd":
        for p, k in enumerate(schedule.pe_active):
            tr.via_glb(k * d.C * d.R ** 2, from_dram=True)  # filters for this pass
            tr.spad_writes += k * d.C * d.R ** 2
            if log:
                log(f"{d.name} fwd pass {p}: {k} filters loaded, {schedule.positions} positions")
        # single-position layers hold each input chunk across passes; others re-read per pass
        reads = 1 if schedule.positions == 1 else schedule.passes
        if schedule.positions > 1 and schedule.c_chunks > 1:
            spilled = T * n * (schedule.c_chunks - 1)
            tr.glb_writes += spilled
            tr.glb_reads += spilled
        tr.dram_reads += spike_words
        tr.glb_writes += spike_words
        tr.glb_reads += spike_words * reads
        tr.spad_writes += spike_words * reads
        tr.via_glb(T * n, from_dram=False)  # potentials out
        macs = _fwd_macs(schedule, spikes)
        tr.spad_reads += 2 * macs  # filter + input operand per executed MAC
    elif stage == "bwd":
        tr.dram_reads += T * n + spike_words  # stored potentials and input spikes
        tr.glb_writes += T * n + spike_words
        tr.glb_reads += T * n + spike_words
        tr.glb_writes += T * n  # incoming dH from the layer above
        tr.glb_reads += T * n
        tr.glb_writes += T * n  # dU, kept for the transposed pass and weight update
        tr.glb_reads += T * n
        tr.glb_writes += T * x  # dH handed to the layer below (b-bit words)
        tr.glb_reads += w  # transposed filters
        tr.spad_writes += w + T * n
        valid = T * n if grad_f is None else float(np.count_nonzero(grad_f))
        tr.spad_reads += valid + _bwd_macs(schedule, grad_u)
    else:
        tr.via_glb(w, from_dram=True)  # weights in
        tr.via_glb(w, from_dram=False)  # updated weights out
        tr.glb_writes += T * w  # per-timestep gradient accumulation
        tr.glb_reads += T * w
        tr.glb_reads += spike_words + T * n  # spikes and dU operands
        tr.spad_writes += spike_words + T * n
        tr.spad_reads += _fwd_macs(schedule, spikes)
    return tr


def simulate_network(dims: list[LayerDims], arch: PeArrayConfig, T: int, masks: Optional[dict] = None,
                     strides: Optional[dict] = None, log: Optional[Callable[[str], None]] = None) -> TrafficTrace:
    """Simulate every layer and stage. ``masks`` maps ``layer -> masks dict``."""
    trace = TrafficTrace()
    strides = strides or {}
    for d in dims:
        sched = schedule_layer(d, arch, T, *strides.get(d.name, (1, None)))
        for st in STAGES:
            trace.add(d.name, st, simulate_traffic(sched, st, (masks or {}).get(d.name), log), sched)
    return trace


# How each (stage, buffer) comparison should be read.
FLAGS = {
    ("fwd", "dram"): "expected-exact",
    ("fwd", "glb"): "expected-exact",
    ("bwd", "dram"): "expected-exact",
    ("bwd", "glb"): "assumed-constant",  # 7x T K E^2 in the table
    ("wup", "dram"): "expected-exact",
    ("wup", "glb"): "assumed-constant",  # 2 (1 + T) K C R^2 in the table
}


@dataclass(frozen=True)
class FieldComparison:
    layer: str
    stage: str
    buffer: str
    simulated: float
    analytic: float
    flag: str

    @property
    def delta(self) -> float:
        return self.simulated - self.analytic

    @property
    def rel_delta(self) -> float:
        if self.analytic == 0:
            return 0.0 if self.simulated == 0 else math.inf
        return self.delta / self.analytic


def crosscheck(trace: TrafficTrace, counts: OpCounts) -> list[FieldComparison]:
    """Compare simulated DRAM / GLB / spad totals with the analytic counts.

    Spad rows are flagged ``convention``: the simulator counts physical
    per-MAC operand reads while the table counts one read per stored word.
    """
    if sorted(trace.layers) != sorted(counts.layers):
        raise StructuralError(f"trace layers {trace.layers} do not match counts {counts.layers}")
    out = []
    for name in counts.layers:
        for st in STAGES:
            if (name, st) not in trace.entries:
                raise StructuralError(f"trace has no {st} entry for {name}")
            sim = trace.entries[(name, st)]
            ana = counts.get(name, st)
            for buf in ("dram", "glb", "spad"):
                out.append(FieldComparison(name, st, buf, sim.total(buf), getattr(ana, f"n_{buf}"),
                                           FLAGS.get((st, buf), "convention")))
    return out


def write_trace_csv(trace: TrafficTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "stage", "buffer", "reads", "writes"])
        for (name, st), tr in trace.entries.items():
            for buf in ("dram", "glb", "spad"):
                w.writerow([name, st, buf, f"{getattr(tr, buf + '_reads'):.0f}",
                            f"{getattr(tr, buf + '_writes'):.0f}"])


def write_crosscheck_csv(rows: list[FieldComparison], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "stage", "buffer", "simulated", "analytic", "delta", "rel_delta", "flag"])
        for r in rows:
            w.writerow([r.layer, r.stage, r.buffer, f"{r.simulated:.0f}", f"{r.analytic:.0f}",
                        f"{r.delta:.0f}", f"{r.rel_delta:.6g}", r.flag])
