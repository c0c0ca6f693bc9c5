"""Training energy per image, split by stage and by compute / memory.

    E_total = sum over stages of (E_compute + E_memory) + E_ctrl

    E_compute(fwd) = N_mac * e_mac_fwd + N_lif * e_lif
    E_compute(bwd) = N_mac * e_mac_bwd + N_grad_s * e_grad_u
    E_compute(wup) = N_mac * e_mac_wup
    E_memory       = N_dram * e_dram + N_glb * e_glb + N_spad * e_spad

The potential-gradient unit runs once per valid firing gradient, so its
count is the ``(1 - sp_df)``-scaled ``n_grad_s``. In overhead mode each
compute term becomes ``N(sp) * e_with + N_dense * (e_with - e_without)``:
the sparsity-handling logic costs its overhead on every dense slot.

All energies are in units of one 8-bit ANN MAC. Only the three SNN compute
energies are measured values; memory and LIF energies in the default table
are a calibration (see :data:`DEFAULT_MEMORY`).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from .counts import STAGES, ArchParams, OpCounts, StageCounts, count_ops
from .errors import InputDomainError, ValidationError
from .network import LayerDims, NetworkSpec
from .sparsity import SparsityProfile

COMPUTE_KEYS = ("e_mac_fwd", "e_mac_bwd", "e_mac_wup", "e_lif", "e_grad_u",
                "ann_mac_fwd", "ann_mac_bwd", "ann_mac_wup")
MEMORY_KEYS = ("e_dram", "e_glb", "e_spad", "e_ctrl")

DEFAULT_WITHOUT_OVERHEAD = {
    "e_mac_fwd": 0.146, "e_mac_bwd": 1.003, "e_mac_wup": 0.146, "e_lif": 0.5, "e_grad_u": 0.952,
    "ann_mac_fwd": 1.0, "ann_mac_bwd": 1.0, "ann_mac_wup": 1.0,
}
DEFAULT_WITH_OVERHEAD = {**DEFAULT_WITHOUT_OVERHEAD, "e_mac_bwd": 1.120, "e_grad_u": 1.078}
# Calibration: spad ~ one MAC, GLB ~ 6 MACs, DRAM ~ 200 MACs (Eyeriss-like ratios).
DEFAULT_MEMORY = {"e_dram": 200.0, "e_glb": 6.0, "e_spad": 1.0, "e_ctrl": 0.0}

# (sparse count field, dense count field, table key) per stage
_SNN_TERMS = {
    "fwd": (("n_mac", "n_mac_dense", "e_mac_fwd"), ("n_lif", "n_lif", "e_lif")),
    "bwd": (("n_mac", "n_mac_dense", "e_mac_bwd"), ("n_grad_s", "n_grad_u", "e_grad_u")),
    "wup": (("n_mac", "n_mac_dense", "e_mac_wup"),),
}
_ANN_TERMS = {st: (("n_mac", "n_mac_dense", f"ann_mac_{st}"),) for st in STAGES}


@dataclass(frozen=True)
class EnergyTable:
    without_overhead: dict = field(default_factory=lambda: dict(DEFAULT_WITHOUT_OVERHEAD))
    with_overhead: dict = field(default_factory=lambda: dict(DEFAULT_WITH_OVERHEAD))
    memory: dict = field(default_factory=lambda: dict(DEFAULT_MEMORY))
    name: str = "default-calibration"

    def __post_init__(self):
        for group in (self.without_overhead, self.with_overhead, self.memory):
            for k, v in group.items():
                if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                    raise ValidationError(f"energy entry {k} = {v!r} must be a finite value >= 0")
        for k, v in self.with_overhead.items():
            base = self.without_overhead.get(k)
            if base is not None and v < base:
                raise ValidationError(f"{k}: with-overhead energy {v} is below {base}")

    def compute(self, key: str, overhead: bool = False) -> float:
        group = self.with_overhead if overhead else self.without_overhead
        if key not in group:
            raise ValidationError(f"energy table {self.name!r} has no entry {key}")
        return float(group[key])

    def overhead(self, key: str) -> float:
        return self.compute(key, True) - self.compute(key, False)

    def mem(self, key: str) -> float:
        if key not in self.memory:
            raise ValidationError(f"energy table {self.name!r} has no entry {key}")
        return float(self.memory[key])

    def scaled(self, factor: float) -> "EnergyTable":
        def mul(d):
            return {k: v * factor for k, v in d.items()}
        return EnergyTable(mul(self.without_overhead), mul(self.with_overhead), mul(self.memory),
                           f"{self.name}*{factor:g}")

    def fingerprint(self) -> str:
        blob = json.dumps([self.without_overhead, self.with_overhead, self.memory], sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class StageEnergy:
    compute: float = 0.0
    dram: float = 0.0
    glb: float = 0.0
    spad: float = 0.0

    @property
    def memory(self) -> float:
        return self.dram + self.glb + self.spad

    @property
    def total(self) -> float:
        return self.compute + self.memory

    def __add__(self, other: "StageEnergy") -> "StageEnergy":
        return StageEnergy(self.compute + other.compute, self.dram + other.dram,
                           self.glb + other.glb, self.spad + other.spad)


@dataclass
class EnergyReport:
    """Per-image energy. ``stages`` sums ``layers``; ``total`` is summed separately."""

    layers: dict[tuple[str, str], StageEnergy]
    layer_names: list[str]
    e_ctrl: float
    kind: str = "snn"
    table_fingerprint: str = ""
    overhead_mode: bool = False
    stages: dict[str, StageEnergy] = field(init=False)
    total: float = field(init=False)

    def __post_init__(self):
        self.stages = {}
        for st in STAGES:
            acc = StageEnergy()
            for name in self.layer_names:
                acc = acc + self.layers.get((name, st), StageEnergy())
            self.stages[st] = acc
        parts = [self.e_ctrl]
        for e in self.layers.values():
            parts += [e.compute, e.dram, e.glb, e.spad]
        self.total = math.fsum(parts)

    @property
    def compute(self) -> float:
        return sum(self.stages[st].compute for st in STAGES)

    @property
    def memory(self) -> float:
        return sum(self.stages[st].memory for st in STAGES)

    def buffer(self, which: str) -> float:
        return sum(getattr(self.stages[st], which) for st in STAGES)

    def summary(self) -> dict:
        out = {"kind": self.kind, "total": self.total, "compute": self.compute, "memory": self.memory,
               "dram": self.buffer("dram"), "glb": self.buffer("glb"), "spad": self.buffer("spad"),
               "e_ctrl": self.e_ctrl, "overhead_mode": self.overhead_mode, "table": self.table_fingerprint}
        for st in STAGES:
            out[f"{st}_compute"] = self.stages[st].compute
            out[f"{st}_memory"] = self.stages[st].memory
        return out


def _entry(c: StageCounts, stage: str, kind: str, table: EnergyTable, overhead_mode: bool) -> StageEnergy:
    terms = (_ANN_TERMS if kind == "ann" else _SNN_TERMS)[stage]
    compute = 0.0
    for sparse_f, dense_f, key in terms:
        n = getattr(c, sparse_f)
        if overhead_mode:
            compute += n * table.compute(key, True) + getattr(c, dense_f) * table.overhead(key)
        else:
            compute += n * table.compute(key)
    return StageEnergy(compute, c.n_dram * table.mem("e_dram"), c.n_glb * table.mem("e_glb"),
                       c.n_spad * table.mem("e_spad"))


def stage_energy(counts: Union[OpCounts, StageCounts], table: EnergyTable, overhead_mode: bool = False,
                 stage: Optional[str] = None, kind: str = "snn"):
    """Energy of counted operations.

    Given an :class:`OpCounts`, returns ``{(layer, stage): StageEnergy}``.
    Given a single :class:`StageCounts`, ``stage`` names which equation applies
    and one :class:`StageEnergy` is returned.
    """
    if isinstance(counts, StageCounts):
        if stage not in STAGES:
            raise InputDomainError(f"stage must be one of {STAGES}")
        return _entry(counts, stage, kind, table, overhead_mode)
    return {(name, st): _entry(counts.get(name, st), st, counts.kind, table, overhead_mode)
            for name in counts.layers for st in STAGES}


def report_from_counts(counts: OpCounts, table: EnergyTable, overhead_mode: bool = False) -> EnergyReport:
    return EnergyReport(stage_energy(counts, table, overhead_mode), list(counts.layers),
                        table.mem("e_ctrl"), counts.kind, table.fingerprint(), overhead_mode)


def _dims(network: Union[NetworkSpec, Sequence[LayerDims]]) -> list[LayerDims]:
    return network.dims() if isinstance(network, NetworkSpec) else list(network)


def total_energy(network, arch: ArchParams, profile: Optional[SparsityProfile], table: EnergyTable,
                 overhead_mode: bool = False, sparse_spad: bool = False, spill: bool = False) -> EnergyReport:
    """SNN training energy for one image; ``profile=None`` means fully dense."""
    counts = count_ops(_dims(network), arch, profile, sparse_spad=sparse_spad, spill=spill)
    return report_from_counts(counts, table, overhead_mode)


def dense_profile(profile: SparsityProfile) -> SparsityProfile:
    if profile.kind == "ann":
        return profile.with_uniform(sp_z=0.0, sp_gz=0.0)
    return profile.with_uniform(sp_s=0.0, sp_gf=0.0, sp_gu=0.0)


def sweep_timesteps(network, arch: ArchParams, profile: Optional[SparsityProfile], table: EnergyTable,
                    timesteps: Iterable[int], overhead_mode: bool = False, spill: bool = False,
                    sparse_spad: bool = False) -> list[tuple[int, float]]:
    points = []
    for T in timesteps:
        if T < 1:
            raise InputDomainError(f"timesteps must be >= 1, got {T}")
        rep = total_energy(network, arch.with_timesteps(T), profile, table, overhead_mode,
                           sparse_spad=sparse_spad, spill=spill)
        points.append((T, rep.total))
    return points


@dataclass
class GradUSweep:
    points: list[tuple[float, float]]  # (scale, SNN compute energy)
    ann_compute: float
    break_even: Optional[float]


def sweep_grad_u_scale(network, arch: ArchParams, profile: SparsityProfile, table: EnergyTable,
                       scales: Iterable[float], ann_compute: float, overhead_mode: bool = False,
                       tol: float = 1e-9) -> GradUSweep:
    """SNN compute energy as every layer's sp_dU is multiplied by ``scale`` (clamped to 1).

    ``ann_compute`` is the fixed comparison level. ``break_even`` is the
    smallest scale at which the SNN curve reaches it, refined by bisection
    between the bracketing sweep points; ``None`` if the curves never cross.
    """
    def snn(scale: float) -> float:
        if scale < 0:
            raise InputDomainError("scale must be >= 0")
        return total_energy(network, arch, profile.scaled("sp_gu", scale), table, overhead_mode).compute

    scales = sorted(scales)
    points = [(s, snn(s)) for s in scales]
    crossing = None
    for (s0, e0), (s1, e1) in zip(points, points[1:]):
        if e0 == ann_compute:
            crossing = s0
            break
        if (e0 - ann_compute) * (e1 - ann_compute) < 0:
            lo, hi = s0, s1
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if (snn(mid) - ann_compute) * (e0 - ann_compute) > 0:
                    lo = mid
                else:
                    hi = mid
            crossing = 0.5 * (lo + hi)
            break
    else:
        if points and points[-1][1] == ann_compute:
            crossing = points[-1][0]
    return GradUSweep(points, ann_compute, crossing)


def write_report_csv(report: EnergyReport, path) -> None:
    """Six stage rows (compute and memory per stage) and a total row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "component", "energy", "dram", "glb", "spad"])
        for st in STAGES:
            w.writerow([st, "compute", f"{report.stages[st].compute:.6f}", "", "", ""])
        for st in STAGES:
            s = report.stages[st]
            w.writerow([st, "memory", f"{s.memory:.6f}", f"{s.dram:.6f}", f"{s.glb:.6f}", f"{s.spad:.6f}"])
        w.writerow(["total", "all", f"{report.total:.6f}", "", "", ""])


def write_breakdown_csv(report: EnergyReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "stage", "compute", "dram", "glb", "spad"])
        for name in report.layer_names:
            for st in STAGES:
                e = report.layers[(name, st)]
                w.writerow([name, st, *(f"{v:.6f}" for v in (e.compute, e.dram, e.glb, e.spad))])


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(summary, sort_keys=True) + "\n")


def write_curve_csv(points, path, x_name: str, y_name: str = "energy") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([x_name, y_name])
        for x, y in points:
            w.writerow([x if isinstance(x, int) else f"{x:.6g}", f"{y:.6f}"])
