import csv
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikecost.counts import (CSV_COLUMNS, ArchParams, StageCounts, compute_compute_counts,
                              compute_memory_counts, count_ops, spill_words, write_counts_csv)
from spikecost.errors import StructuralError
from spikecost.fixtures import fixture
from spikecost.network import LayerDims, vgg5
from spikecost.sparsity import LayerSparsity, SparsityProfile, load_profile

from count_oracle import brute_bwd_macs, brute_fwd_macs, brute_neuron_steps, random_layer, ringed_mask

ARCH = ArchParams()
PUBLISHED = load_profile(fixture("profiles/vgg5_cifar10_snn.json"))


def profile_for(names, sp_in, sp_gf=0.0, sp_gu=0.0):
    return SparsityProfile((LayerSparsity("inp", sp_s=sp_in),
                            *(LayerSparsity(n, sp_s=0.0, sp_gf=sp_gf, sp_gu=sp_gu) for n in names)))


class TestSpecExamples:
    def test_conv1_dense_fwd(self):
        d = vgg5().dims()[0]
        assert compute_compute_counts([d], ARCH).get("cov1", "fwd").n_mac == 14_155_776

    def test_conv1_published_input_sparsity(self):
        c = count_ops(vgg5().dims(), ARCH, PUBLISHED)
        assert round(c.get("cov1", "fwd").n_mac) == 8_005_091
        assert c.get("cov1", "fwd").n_lif == 524_288

    def test_conv1_memory(self):
        c = compute_memory_counts(vgg5().dims(), ARCH, PUBLISHED)
        assert c.get("cov1", "fwd").n_dram == 529_088
        assert c.get("cov1", "fwd").n_glb == 1_058_176
        assert c.get("cov1", "wup").n_dram == 3_456

    def test_lif_enumeration(self):
        d = vgg5().dims()[0]
        n = brute_neuron_steps(8, d.K, d.E)
        assert compute_compute_counts([d], ARCH).get("cov1", "fwd").n_lif == n


class TestBruteForceOracle:
    @pytest.mark.parametrize("seed", range(60))
    def test_compute_counts_match_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        C, H, K, R, pad, T = random_layer(rng)
        d = LayerDims("l", C, H, K, H, R)
        spikes = ringed_mask(rng, (T, C, H, H), pad)
        grad_u = ringed_mask(rng, (T, K, H, H), pad)
        grad_f = rng.random((T, K, H, H)) < 0.5
        prof = SparsityProfile((
            LayerSparsity("inp", sp_s=Fraction(int((~spikes).sum()), spikes.size)),
            LayerSparsity("l", sp_s=0, sp_gf=Fraction(int((~grad_f).sum()), grad_f.size),
                          sp_gu=Fraction(int((~grad_u).sum()), grad_u.size))))
        c = compute_compute_counts([d], ARCH.with_timesteps(T), prof)
        assert c.get("l", "fwd").n_mac == brute_fwd_macs(spikes, K, R, pad)
        assert c.get("l", "wup").n_mac == brute_fwd_macs(spikes, K, R, pad)
        assert c.get("l", "bwd").n_mac == brute_bwd_macs(grad_u, C, H, R, pad)
        assert c.get("l", "fwd").n_lif == T * K * H * H
        assert c.get("l", "bwd").n_grad_s == brute_neuron_steps(T, K, H, grad_f)

    @pytest.mark.parametrize("seed", range(10))
    def test_unringed_masks_are_bounded(self, seed):
        # border pixels fall in fewer windows, so the formula is an upper bound
        rng = np.random.default_rng(100 + seed)
        C, H, K, _, _, T = random_layer(rng)
        spikes = rng.random((T, C, H, H)) < 0.5
        prof = profile_for(["l"], Fraction(int((~spikes).sum()), spikes.size))
        n = compute_compute_counts([LayerDims("l", C, H, K, H, 3)], ARCH.with_timesteps(T), prof)
        assert brute_fwd_macs(spikes, K, 3, 1) <= n.get("l", "fwd").n_mac

    def test_dense_is_t_times_conv_macs(self):
        for d in vgg5().dims():
            per_step = brute_fwd_macs(np.ones((1, d.C, d.H, d.H), bool), d.K, d.R, d.R // 2) \
                if d.H <= 8 else d.C * d.R ** 2 * d.K * d.E ** 2
            assert compute_compute_counts([d], ARCH).get(d.name, "fwd").n_mac == 8 * per_step


layer_dims = st.builds(lambda C, H, K, R: LayerDims("l", C, H, K, H, R), st.integers(1, 16),
                       st.integers(1, 16), st.integers(1, 16), st.sampled_from([1, 3, 5]))
rate = st.floats(0, 1)


class TestProperties:
    @given(layer_dims, rate, rate, rate, rate)
    def test_monotone_in_sparsity(self, d, a, b, gf, gu):
        lo, hi = sorted((a, b))
        c_lo = count_ops([d], ARCH, profile_for(["l"], lo, gf, gu))
        c_hi = count_ops([d], ARCH, profile_for(["l"], hi, gf, gu))
        for st_ in ("fwd", "wup"):
            assert c_hi.get("l", st_).n_mac <= c_lo.get("l", st_).n_mac

    @given(layer_dims, rate, rate, rate)
    def test_sparse_le_dense(self, d, s, gf, gu):
        c = count_ops([d], ARCH, profile_for(["l"], s, gf, gu))
        for st_ in ("fwd", "bwd", "wup"):
            e = c.get("l", st_)
            assert 0 <= e.n_mac <= e.n_mac_dense
        assert c.get("l", "bwd").n_grad_s <= c.get("l", "bwd").n_grad_u

    @given(layer_dims)
    def test_full_sparsity_zeroes_compute(self, d):
        c = count_ops([d], ARCH, profile_for(["l"], 1.0, 1.0, 1.0))
        assert c.get("l", "fwd").n_mac == c.get("l", "bwd").n_mac == c.get("l", "wup").n_mac == 0
        assert c.get("l", "bwd").n_grad_s == 0 and c.get("l", "fwd").n_lif > 0

    @given(layer_dims, rate, st.integers(1, 30), st.booleans())
    def test_affine_in_t(self, d, s, T, sparse_spad):
        prof = profile_for(["l"], s, 0.3, 0.4)
        c = [count_ops([d], ARCH.with_timesteps(t), prof, sparse_spad=sparse_spad) for t in (T, T + 1, T + 2)]
        for st_ in ("fwd", "bwd", "wup"):
            for f in ("n_mac", "n_lif", "n_grad_u", "n_grad_s", "n_dram", "n_glb", "n_spad"):
                v = [getattr(x.get("l", st_), f) for x in c]
                assert v[1] - v[0] >= 0
                assert v[2] - v[1] == pytest.approx(v[1] - v[0], rel=1e-9, abs=1e-6)

    @given(layer_dims, rate, rate)
    def test_sparse_spad_only_lowers_spad(self, d, s, gf):
        prof = profile_for(["l"], s, gf, 0.2)
        dense = count_ops([d], ARCH, prof)
        sparse = count_ops([d], ARCH, prof, sparse_spad=True)
        for st_ in ("fwd", "bwd", "wup"):
            a, b = dense.get("l", st_), sparse.get("l", st_)
            assert b.n_spad <= a.n_spad + 1e-9 and (a.n_dram, a.n_glb) == (b.n_dram, b.n_glb)

    def test_sparse_spad_zero_sparsity_is_table(self):
        dims = vgg5().dims()
        assert count_ops(dims, ARCH, profile_for([d.name for d in dims], 0.0), sparse_spad=True).entries == \
            count_ops(dims, ARCH).entries


class TestSpill:
    def test_single_step_no_spill(self):
        for d in vgg5().dims():
            assert spill_words(d, ARCH.with_timesteps(1)) == 0.0

    def test_conv1_spill_threshold(self):
        d = vgg5().dims()[0]  # 65,536 neurons: 2 bytes U/dU each -> 256 KB at T=2
        assert spill_words(d, ARCH.with_timesteps(2)) == 0.0
        # T=4: U/dU 512 KB (256 KB over), S 32 KB (at capacity)
        assert spill_words(d, ARCH.with_timesteps(4)) == 4 * 262_144

    def test_spill_adds_to_bwd_dram_only(self):
        dims = vgg5().dims()
        arch = ARCH.with_timesteps(16)
        a, b = count_ops(dims, arch, PUBLISHED), count_ops(dims, arch, PUBLISHED, spill=True)
        assert b.get("cov1", "bwd").n_dram - a.get("cov1", "bwd").n_dram == spill_words(dims[0], arch)
        assert b.get("cov1", "fwd") == a.get("cov1", "fwd")


class TestStructure:
    def test_profile_mismatch(self):
        with pytest.raises(StructuralError):
            count_ops(vgg5().dims(), ARCH, profile_for(["a"], 0.1))

    def test_invalid_arch(self):
        with pytest.raises(StructuralError):
            ArchParams(bitwidth=0)
        with pytest.raises(StructuralError):
            ArchParams(glb_u_bytes=0)

    def test_stage_sum(self):
        c = count_ops(vgg5().dims(), ARCH, PUBLISHED)
        total = StageCounts()
        for name in c.layers:
            total = total + c.get(name, "bwd")
        assert c.stage("bwd") == total

    def test_fc_uses_unit_kernel(self):
        d = vgg5().dims()[-1]
        assert (d.H, d.E, d.R) == (1, 1, 1)
        assert compute_compute_counts([d], ARCH).get(d.name, "fwd").n_mac == 8 * d.C * d.K

    def test_csv(self, tmp_path):
        c = count_ops(vgg5().dims(), ARCH, PUBLISHED)
        write_counts_csv(c, tmp_path / "c.csv")
        with open(tmp_path / "c.csv") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 1 + 3 * 5
        assert rows[1][:3] == ["cov1", "fwd", "8005091"]
