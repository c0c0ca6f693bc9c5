"""Analytic operation and memory-access counts for one training image.

Per weighted layer with dims ``C, H, K, E, R``, ``T`` timesteps and
``b``-bit words (spikes are packed ``b`` per word)::

    fwd  n_mac   T (1 - sp_S[in]) C R^2 K E^2        n_lif   T K E^2
         dram    K C R^2 + T (K E^2 + C H^2 / b)     glb     2 dram
         spad    2 (K C R^2 + T C H^2 / b)
    bwd  n_mac   T (1 - sp_dU) C R^2 K H^2           n_grad_u  T K E^2
         n_grad_s  T (1 - sp_df) K E^2
         dram    T (K E^2 + C H^2 / b)
         glb     7 T K E^2 + 2 T C H^2 / b + K C R^2
         spad    K C R^2 + T K E^2
    wup  n_mac   T (1 - sp_S[in]) C R^2 K E^2
         dram    2 K C R^2
         glb     2 (1 + T) K C R^2 + T (C H^2 / b + K E^2)
         spad    glb + 2 T K C R^2

``sp_S[in]`` is the spike sparsity of the layer's *input* (the encoded image
for the first layer), since the input spike is what gates each MAC. Counts
are real-valued expectations. Pool layers contribute nothing; FC layers use
``H = E = R = 1``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields, replace
from typing import Iterable, Optional

from .errors import StructuralError
from .network import LayerDims
from .sparsity import SparsityProfile

STAGES = ("fwd", "bwd", "wup")
CSV_COLUMNS = ("layer", "stage", "n_mac", "n_lif", "n_grad_s", "n_grad_u", "n_dram", "n_glb", "n_spad")


@dataclass(frozen=True)
class ArchParams:
    bitwidth: int = 8
    timesteps: int = 8
    pe_count: int = 128
    pgu_count: int = 128
    spad_bytes: int = 1152
    glb_w_bytes: int = 144 * 1024
    glb_u_bytes: int = 256 * 1024
    glb_s_bytes: int = 32 * 1024

    def __post_init__(self):
        if self.bitwidth < 1 or self.timesteps < 1:
            raise StructuralError("bitwidth and timesteps must be >= 1")
        for f in ("pe_count", "pgu_count", "spad_bytes", "glb_w_bytes", "glb_u_bytes", "glb_s_bytes"):
            if getattr(self, f) <= 0:
                raise StructuralError(f"{f} must be positive")

    def with_timesteps(self, T: int) -> "ArchParams":
        return replace(self, timesteps=T)


@dataclass(frozen=True)
class StageCounts:
    n_mac: float = 0.0
    n_mac_dense: float = 0.0
    n_lif: float = 0.0
    n_grad_u: float = 0.0
    n_grad_s: float = 0.0
    n_dram: float = 0.0
    n_glb: float = 0.0
    n_spad: float = 0.0

    def __add__(self, other: "StageCounts") -> "StageCounts":
        return StageCounts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def merge(self, other: "StageCounts") -> "StageCounts":
        """Combine a compute-only and a memory-only record of the same stage."""
        return self + other


@dataclass
class OpCounts:
    """Counts keyed by ``(layer, stage)``; ``kind`` is ``snn`` or ``ann``."""

    layers: list[str]
    entries: dict[tuple[str, str], StageCounts]
    kind: str = "snn"

    def get(self, layer: str, stage: str) -> StageCounts:
        return self.entries.get((layer, stage), StageCounts())

    def stage(self, stage: str) -> StageCounts:
        out = StageCounts()
        for name in self.layers:
            out = out + self.get(name, stage)
        return out

    def merge(self, other: "OpCounts") -> "OpCounts":
        if other.layers != self.layers:
            raise StructuralError("cannot merge counts over different layer lists")
        keys = set(self.entries) | set(other.entries)
        return OpCounts(self.layers, {k: self.get(*k) + other.get(*k) for k in keys}, self.kind)

    def rows(self) -> Iterable[dict]:
        for name in self.layers:
            for st in STAGES:
                c = self.get(name, st)
                yield {"layer": name, "stage": st, "n_mac": c.n_mac, "n_lif": c.n_lif,
                       "n_grad_s": c.n_grad_s, "n_grad_u": c.n_grad_u, "n_dram": c.n_dram,
                       "n_glb": c.n_glb, "n_spad": c.n_spad}


def write_counts_csv(counts: OpCounts, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in counts.rows():
            w.writerow({k: (v if isinstance(v, str) else f"{v:.0f}") for k, v in row.items()})


def _input_sparsity(profile: Optional[SparsityProfile], dims: list[LayerDims], key: str = "sp_s") -> list[float]:
    if profile is None:
        return [0.0] * len(dims)
    profile.check_network([d.name for d in dims])
    names = profile.names
    return [profile.value(names[i], key) for i in range(len(dims))]


def _own(profile: Optional[SparsityProfile], dims: list[LayerDims], key: str) -> list[float]:
    if profile is None:
        return [0.0] * len(dims)
    profile.check_network([d.name for d in dims])
    return [profile.value(d.name, key) for d in dims]


def compute_compute_counts(dims: list[LayerDims], arch: ArchParams,
                           profile: Optional[SparsityProfile] = None) -> OpCounts:
    T = arch.timesteps
    sp_in = _input_sparsity(profile, dims)
    sp_gu = _own(profile, dims, "sp_gu")
    sp_gf = _own(profile, dims, "sp_gf")
    entries = {}
    for d, s_in, s_gu, s_gf in zip(dims, sp_in, sp_gu, sp_gf):
        dense_fwd = T * d.macs
        dense_bwd = T * d.bwd_macs
        entries[(d.name, "fwd")] = StageCounts(
            n_mac=(1 - s_in) * dense_fwd, n_mac_dense=dense_fwd, n_lif=T * d.neurons)
        entries[(d.name, "bwd")] = StageCounts(
            n_mac=(1 - s_gu) * dense_bwd, n_mac_dense=dense_bwd,
            n_grad_u=T * d.neurons, n_grad_s=T * (1 - s_gf) * d.neurons)
        entries[(d.name, "wup")] = StageCounts(n_mac=(1 - s_in) * dense_fwd, n_mac_dense=dense_fwd)
    return OpCounts([d.name for d in dims], entries)


def spill_words(d: LayerDims, arch: ArchParams) -> float:
    """Extra DRAM words per image when a layer's T-deep state overflows the GLBs.

    The potentials and potential gradients (``b`` bits each) and spikes (1 bit)
    of all ``T`` timesteps are held for BPTT. Whatever exceeds the U/dU and S
    buffers is re-streamed from DRAM once per backward timestep, so the
    overflow costs ``T * spilled_words``, quadratic in ``T`` once it starts.
    """
    T, b = arch.timesteps, arch.bitwidth
    u_bytes = T * d.neurons * 2 * b / 8
    s_bytes = T * d.neurons / 8
    spilled = max(0.0, u_bytes - arch.glb_u_bytes) + max(0.0, s_bytes - arch.glb_s_bytes)
    return T * spilled * 8 / b


def compute_memory_counts(dims: list[LayerDims], arch: ArchParams,
                          profile: Optional[SparsityProfile] = None, sparse_spad: bool = False,
                          spill: bool = False) -> OpCounts:
    """DRAM / GLB / scratchpad accesses.

    ``sparse_spad`` elides scratchpad reads gated by zero operands (input
    spikes in fwd/wup, invalid firing gradients in bwd); the default matches
    the dense table. ``spill`` adds the GLB-overflow traffic of
    :func:`spill_words` to the backward stage.
    """
    T, b = arch.timesteps, arch.bitwidth
    sp_in = _input_sparsity(profile, dims) if sparse_spad else [0.0] * len(dims)
    sp_gf = _own(profile, dims, "sp_gf") if sparse_spad else [0.0] * len(dims)
    entries = {}
    for d, s_in, s_gf in zip(dims, sp_in, sp_gf):
        w, n, x = d.weights, d.neurons, d.inputs
        dram_fwd = w + T * (n + x / b)
        spad_fwd_once = w + T * x / b  # written once, read once (reads gated)
        entries[(d.name, "fwd")] = StageCounts(
            n_dram=dram_fwd, n_glb=2 * dram_fwd, n_spad=spad_fwd_once * (2 - s_in))
        dram_bwd = T * (n + x / b)
        if spill:
            dram_bwd += spill_words(d, arch)
        entries[(d.name, "bwd")] = StageCounts(
            n_dram=dram_bwd, n_glb=7 * T * n + 2 * T * x / b + w, n_spad=w + T * n * (1 - s_gf))
        glb_wup = 2 * (1 + T) * w + T * (x / b + n)
        entries[(d.name, "wup")] = StageCounts(
            n_dram=2 * w, n_glb=glb_wup, n_spad=glb_wup + 2 * T * w * (1 - s_in))
    return OpCounts([d.name for d in dims], entries)


def count_ops(dims: list[LayerDims], arch: ArchParams, profile: Optional[SparsityProfile] = None,
              sparse_spad: bool = False, spill: bool = False) -> OpCounts:
    return compute_compute_counts(dims, arch, profile).merge(
        compute_memory_counts(dims, arch, profile, sparse_spad=sparse_spad, spill=spill))
