"""ANN training baseline on the same dataflow, and SNN-vs-ANN ratios.

The ANN counts are the SNN formulas specialised to one timestep with 8-bit
activations (one activation per word, so no spike packing) and without the
LIF and potential-gradient units:

    fwd  n_mac = (1 - sp_Z[in]) C R^2 K E^2
    bwd  n_mac = (1 - sp_dZ) C R^2 K H^2
    wup  n_mac = (1 - sp_Z[in]) C R^2 K E^2

On top of that, every ReLU layer (all but the last) stores a 1-bit mask per
activation, packed ``b`` per word. The mask goes GLB to DRAM in the forward
stage and comes back in the backward stage, so each of those stages adds
``K E^2 / b`` DRAM accesses and twice that in GLB accesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .counts import STAGES, ArchParams, OpCounts, StageCounts, compute_memory_counts
from .energy import EnergyReport, EnergyTable, report_from_counts
from .network import LayerDims
from .sparsity import SparsityProfile


def ann_counts(dims: Sequence[LayerDims], arch: ArchParams, profile: Optional[SparsityProfile] = None,
               mask_traffic: bool = True) -> OpCounts:
    dims = list(dims)
    names = [d.name for d in dims]
    if profile is not None:
        profile.check_network(names)
        sp_in = [profile.value(n, "sp_z") for n in profile.names[:-1]]
        sp_gz = [profile.value(n, "sp_gz") for n in names]
    else:
        sp_in = sp_gz = [0.0] * len(dims)

    mem = compute_memory_counts(dims, replace(arch, timesteps=1, bitwidth=1))
    entries = {}
    for i, d in enumerate(dims):
        masked = mask_traffic and i < len(dims) - 1
        mask_words = d.neurons / arch.bitwidth if masked else 0.0
        f, b, w = (mem.get(d.name, st) for st in STAGES)
        entries[(d.name, "fwd")] = replace(
            f, n_mac=(1 - sp_in[i]) * d.macs, n_mac_dense=d.macs,
            n_dram=f.n_dram + mask_words, n_glb=f.n_glb + 2 * mask_words)
        entries[(d.name, "bwd")] = replace(
            b, n_mac=(1 - sp_gz[i]) * d.bwd_macs, n_mac_dense=d.bwd_macs,
            n_dram=b.n_dram + mask_words, n_glb=b.n_glb + 2 * mask_words)
        entries[(d.name, "wup")] = replace(w, n_mac=(1 - sp_in[i]) * d.macs, n_mac_dense=d.macs)
    return OpCounts(names, entries, kind="ann")


def ann_energy(dims: Sequence[LayerDims], arch: ArchParams, profile: Optional[SparsityProfile],
               table: EnergyTable, overhead_mode: bool = False, mask_traffic: bool = True) -> EnergyReport:
    return report_from_counts(ann_counts(dims, arch, profile, mask_traffic), table, overhead_mode)


@dataclass
class RatioReport:
    """Named ``a / b`` energy ratios. Zero denominators land in ``errors``, not in ``ratios``."""

    ratios: dict[str, float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    unit_mismatch: bool = False

    def rows(self):
        for name, v in self.ratios.items():
            yield name, v, ""
        for name, msg in self.errors.items():
            yield name, math.nan, msg


def _components(rep: EnergyReport) -> dict[str, float]:
    out = {"total": rep.total, "compute": rep.compute, "memory": rep.memory,
           "dram": rep.buffer("dram"), "glb": rep.buffer("glb"), "spad": rep.buffer("spad")}
    for st in STAGES:
        s = rep.stages[st]
        out[f"{st}_compute"] = s.compute
        out[f"{st}_memory"] = s.memory
        out[f"{st}_total"] = s.total
    return out


def compare_reports(a: EnergyReport, b: EnergyReport) -> RatioReport:
    """Ratios of report ``a`` over report ``b`` (e.g. SNN over ANN)."""
    out = RatioReport(unit_mismatch=a.table_fingerprint != b.table_fingerprint)
    ca, cb = _components(a), _components(b)
    for name, num in ca.items():
        den = cb[name]
        if den == 0:
            out.errors[name] = "undefined ratio: denominator energy is 0" if num else "undefined ratio: 0/0"
        else:
            out.ratios[name] = num / den
    return out

