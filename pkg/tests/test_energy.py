import csv
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikecost.ann import ann_energy
from spikecost.counts import STAGES, ArchParams, StageCounts, count_ops
from spikecost.energy import (COMPUTE_KEYS, EnergyTable, GradUSweep, dense_profile, report_from_counts,
                              stage_energy, sweep_grad_u_scale, sweep_timesteps, total_energy,
                              write_breakdown_csv, write_curve_csv, write_report_csv, write_summary)
from spikecost.errors import InputDomainError, ValidationError
from spikecost.fixtures import fixture
from spikecost.network import vgg5
from spikecost.sparsity import load_profile

ARCH = ArchParams()
TABLE = EnergyTable()
NET = vgg5()
SNN = load_profile(fixture("profiles/vgg5_cifar10_snn.json"))
ANN = load_profile(fixture("profiles/vgg5_cifar10_ann.json"))
rate = st.floats(0, 1)


class TestStageEnergy:
    def test_zero_counts(self):
        for stage in STAGES:
            assert stage_energy(StageCounts(), TABLE, stage=stage).total == 0.0
            assert stage_energy(StageCounts(), TABLE, True, stage=stage).total == 0.0

    def test_published_bwd_mac(self):
        e = stage_energy(StageCounts(n_mac=1000, n_mac_dense=1000), TABLE, stage="bwd")
        assert e.compute == pytest.approx(1003.0, rel=1e-12)

    def test_overhead_example(self):
        e = stage_energy(StageCounts(n_mac=500, n_mac_dense=1000), TABLE, True, stage="bwd")
        assert e.compute == pytest.approx(677.0, rel=1e-12)

    def test_overhead_at_zero_sparsity(self):
        # N * e_with from the sparse term plus N * (e_with - e_without) from the dense overhead term
        e = stage_energy(StageCounts(n_mac=1000, n_mac_dense=1000), TABLE, True, stage="bwd")
        assert e.compute == pytest.approx(1000 * 1.120 + 1000 * (1.120 - 1.003), rel=1e-12)

    def test_grad_unit_uses_valid_gradients(self):
        e = stage_energy(StageCounts(n_grad_u=100, n_grad_s=40), TABLE, stage="bwd")
        assert e.compute == pytest.approx(40 * 0.952)

    def test_memory_terms(self):
        e = stage_energy(StageCounts(n_dram=2, n_glb=3, n_spad=5), TABLE, stage="fwd")
        assert (e.dram, e.glb, e.spad, e.compute) == (400.0, 18.0, 5.0, 0.0)

    def test_bad_stage(self):
        with pytest.raises(InputDomainError):
            stage_energy(StageCounts(), TABLE, stage="all")

    def test_missing_entry(self):
        partial = {k: 1.0 for k in COMPUTE_KEYS if k != "e_lif"}
        table = EnergyTable(without_overhead=partial, with_overhead=partial)
        with pytest.raises(ValidationError):
            stage_energy(StageCounts(n_lif=1), table, stage="fwd")


class TestTable:
    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            EnergyTable(memory={"e_dram": -1.0, "e_glb": 1.0, "e_spad": 1.0, "e_ctrl": 0.0})

    def test_with_below_without_rejected(self):
        with pytest.raises(ValidationError):
            EnergyTable(with_overhead={**EnergyTable().without_overhead, "e_mac_bwd": 0.5})

    def test_published_compute_entries(self):
        assert TABLE.compute("e_mac_fwd") == 0.146
        assert (TABLE.compute("e_mac_bwd"), TABLE.compute("e_mac_bwd", True)) == (1.003, 1.120)
        assert (TABLE.compute("e_grad_u"), TABLE.compute("e_grad_u", True)) == (0.952, 1.078)

    def test_default_ordering(self):
        assert TABLE.mem("e_dram") > TABLE.mem("e_glb") > TABLE.mem("e_spad") > 0
        assert TABLE.mem("e_ctrl") == 0.0

    def test_fingerprint(self):
        assert TABLE.fingerprint() == EnergyTable().fingerprint() != TABLE.scaled(2).fingerprint()


class TestReport:
    @pytest.mark.parametrize("overhead", [False, True])
    @pytest.mark.parametrize("profile", [None, SNN])
    def test_total_is_sum_of_parts(self, overhead, profile):
        rep = total_energy(NET, ARCH, profile, TABLE, overhead)
        parts = sum(rep.stages[s].compute + rep.stages[s].memory for s in STAGES) + rep.e_ctrl
        assert rep.total == pytest.approx(parts, rel=1e-9)
        assert rep.total == pytest.approx(rep.compute + rep.memory + rep.e_ctrl, rel=1e-9)
        assert all(v >= 0 for e in rep.layers.values() for v in (e.compute, e.dram, e.glb, e.spad))

    def test_e_ctrl_added_once(self):
        table = EnergyTable(memory={"e_dram": 200.0, "e_glb": 6.0, "e_spad": 1.0, "e_ctrl": 7.0})
        assert total_energy(NET, ARCH, SNN, table).total - total_energy(NET, ARCH, SNN, TABLE).total == \
            pytest.approx(7.0, abs=1e-3)

    def test_full_sparsity_leaves_memory_and_lif(self):
        prof = SNN.with_uniform(sp_s=1.0, sp_gf=1.0, sp_gu=1.0)
        rep = total_energy(NET, ARCH, prof, TABLE)
        counts = count_ops(NET.dims(), ARCH, prof)
        assert rep.compute == pytest.approx(counts.stage("fwd").n_lif * TABLE.compute("e_lif"), rel=1e-12)
        assert rep.total == pytest.approx(rep.memory + rep.compute, rel=1e-12)

    @pytest.mark.parametrize("overhead", [False, True])
    def test_doubling_table_doubles_total(self, overhead):
        a = total_energy(NET, ARCH, SNN, TABLE, overhead).total
        b = total_energy(NET, ARCH, SNN, TABLE.scaled(2.0), overhead).total
        assert b == pytest.approx(2 * a, rel=1e-12)

    def test_linear_in_counts(self):
        c = count_ops(NET.dims(), ARCH, SNN)
        doubled = type(c)(c.layers, {k: v + v for k, v in c.entries.items()})
        assert report_from_counts(doubled, TABLE).total == pytest.approx(2 * report_from_counts(c, TABLE).total)

    @given(rate, rate, rate, rate)
    def test_monotone_in_profile(self, a, b, gf, gu):
        lo, hi = sorted((a, b))
        sparse = total_energy(NET, ARCH, SNN.with_uniform(sp_s=hi, sp_gf=gf, sp_gu=gu), TABLE).total
        denser = total_energy(NET, ARCH, SNN.with_uniform(sp_s=lo, sp_gf=gf, sp_gu=gu), TABLE).total
        assert sparse <= denser * (1 + 1e-12)

    @given(rate, rate, rate)
    def test_memory_independent_of_sparsity(self, s, gf, gu):
        prof = SNN.with_uniform(sp_s=s, sp_gf=gf, sp_gu=gu)
        assert total_energy(NET, ARCH, prof, TABLE).memory == total_energy(NET, ARCH, None, TABLE).memory
        sparse_spad = total_energy(NET, ARCH, prof, TABLE, sparse_spad=True)
        dense = total_energy(NET, ARCH, None, TABLE)
        for st_ in STAGES:
            assert sparse_spad.stages[st_].dram == dense.stages[st_].dram
            assert sparse_spad.stages[st_].glb == dense.stages[st_].glb
            assert sparse_spad.stages[st_].spad <= dense.stages[st_].spad

    def test_dense_profile_equals_no_profile(self):
        assert total_energy(NET, ARCH, dense_profile(SNN), TABLE).total == total_energy(NET, ARCH, None, TABLE).total

    def test_sparse_compute_reduction(self):
        dense = total_energy(NET, ARCH, None, TABLE).compute
        sparse = total_energy(NET, ARCH, SNN, TABLE).compute
        assert 4.0 <= dense / sparse <= 7.0

    def test_summary_keys(self):
        s = total_energy(NET, ARCH, SNN, TABLE).summary()
        assert {"total", "compute", "memory", "dram", "glb", "spad", "fwd_compute", "wup_memory"} <= set(s)


class TestSweeps:
    def test_timesteps_affine_without_spill(self):
        pts = sweep_timesteps(NET, ARCH, SNN, TABLE, [1, 2, 4, 8, 16])
        slope = pts[1][1] - pts[0][1]
        for T, e in pts:
            assert e == pytest.approx(pts[0][1] + (T - 1) * slope, rel=1e-12)
        assert slope > 0

    def test_timesteps_convex_with_spill(self):
        ts = [1, 2, 4, 8, 16, 32, 64]
        pts = sweep_timesteps(NET, ARCH, SNN, TABLE, ts, spill=True)
        rates = [(e1 - e0) / (t1 - t0) for (t0, e0), (t1, e1) in zip(pts, pts[1:])]
        assert all(b > a for a, b in zip(rates, rates[1:]))

    def test_timesteps_reject_zero(self):
        with pytest.raises(InputDomainError):
            sweep_timesteps(NET, ARCH, SNN, TABLE, [0])

    def _ann_compute(self):
        return ann_energy(NET.dims(), ARCH, ANN, TABLE).compute

    def test_grad_u_sweep_monotone_and_crosses(self):
        scales = [0.5 + 0.05 * i for i in range(21)]
        res = sweep_grad_u_scale(NET, ARCH, SNN, TABLE, scales, self._ann_compute())
        energies = [e for _, e in res.points]
        assert all(b <= a for a, b in zip(energies, energies[1:]))
        assert res.break_even is not None and res.break_even > 1.0
        at = total_energy(NET, ARCH, SNN.scaled("sp_gu", res.break_even), TABLE).compute
        assert at == pytest.approx(res.ann_compute, rel=1e-6)

    def test_grad_u_no_crossing(self):
        res = sweep_grad_u_scale(NET, ARCH, SNN, TABLE, [0.1, 0.2], ann_compute=1.0)
        assert res.break_even is None and isinstance(res, GradUSweep)

    def test_full_grad_u_sparsity_zeroes_bwd_mac(self):
        prof = SNN.scaled("sp_gu", 1e6)
        counts = count_ops(NET.dims(), ARCH, prof)
        assert counts.stage("bwd").n_mac == 0


class TestWriters:
    def test_report_csv(self, tmp_path):
        rep = total_energy(NET, ARCH, SNN, TABLE)
        write_report_csv(rep, tmp_path / "e.csv")
        rows = list(csv.reader(open(tmp_path / "e.csv")))
        assert len(rows) == 1 + 6 + 1 and rows[-1][0] == "total"
        assert math.fsum(float(r[2]) for r in rows[1:7]) == pytest.approx(float(rows[-1][2]), rel=1e-9)

    def test_breakdown_and_summary(self, tmp_path):
        rep = total_energy(NET, ARCH, SNN, TABLE)
        write_breakdown_csv(rep, tmp_path / "b.csv")
        write_summary(rep.summary(), tmp_path / "s.json")
        assert len((tmp_path / "b.csv").read_text().splitlines()) == 1 + 15
        text = (tmp_path / "s.json").read_text()
        assert text.count("\n") == 1 and json.loads(text)["total"] == rep.total

    def test_curve(self, tmp_path):
        write_curve_csv([(1, 2.0), (2, 3.5)], tmp_path / "c.csv", "T")
        assert (tmp_path / "c.csv").read_text().splitlines() == ["T,energy", "1,2.000000", "2,3.500000"]
