import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikecost.snn import layers as L


def naive_conv(x, w, stride, pad):
    n, c, h, _ = x.shape
    k, _, r, _ = w.shape
    e = (h + 2 * pad - r) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, k, e, e))
    for b in range(n):
        for kk in range(k):
            for i in range(e):
                for j in range(e):
                    out[b, kk, i, j] = np.sum(xp[b, :, i * stride:i * stride + r, j * stride:j * stride + r] * w[kk])
    return out


conv_cfg = st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(3, 7),
                     st.sampled_from([(1, 1, 0), (3, 1, 1), (3, 1, 0), (2, 2, 0)]), st.integers(0, 2**31))


class TestConv:
    @given(conv_cfg)
    def test_forward_matches_loops(self, cfg):
        c, k, h, (r, stride, pad), seed = cfg
        if (h + 2 * pad - r) % stride:
            return
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, c, h, h))
        w = rng.normal(size=(k, c, r, r))
        assert np.allclose(L.conv_forward(x, w, stride, pad), naive_conv(x, w, stride, pad))

    @given(conv_cfg)
    def test_backward_is_adjoint(self, cfg):
        c, k, h, (r, stride, pad), seed = cfg
        if (h + 2 * pad - r) % stride:
            return
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, c, h, h))
        w = rng.normal(size=(k, c, r, r))
        y = L.conv_forward(x, w, stride, pad)
        dy = rng.normal(size=y.shape)
        dx = L.conv_backward_input(dy, w, h, stride, pad)
        dw = L.conv_backward_weight(x, dy, r, stride, pad)
        # <conv(x), dy> = <x, conv^T(dy)> = <w, dW>
        assert np.isclose(np.sum(y * dy), np.sum(x * dx))
        assert np.isclose(np.sum(y * dy), np.sum(w * dw))

    def test_skip_zero_rows_bit_identical(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(4, 3, 3, 3))
        dy = rng.normal(size=(5, 4, 6, 6)) * (rng.random((5, 4, 6, 6)) < 0.2)
        a = L.conv_backward_input(dy, w, 6, 1, 1, skip_zero=False)
        b = L.conv_backward_input(dy, w, 6, 1, 1, skip_zero=True)
        assert np.array_equal(a, b)

    def test_fc_skip_zero(self):
        rng = np.random.default_rng(1)
        w = rng.normal(size=(5, 7))
        dy = rng.normal(size=(6, 5)) * (rng.random((6, 5)) < 0.3)
        assert np.array_equal(L.fc_backward_input(dy, w), L.fc_backward_input(dy, w, skip_zero=True))

    def test_gemm_single_row_matches_full(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(9, 40))
        b = rng.normal(size=(40, 13))
        full = L.gemm(a, b)
        assert np.array_equal(L.gemm(a[3:4], b), full[3:4])


class TestMaxPool:
    def test_ties_go_to_lowest_index(self):
        x = np.array([[[[1, 1], [1, 0]]]], dtype=float)
        out, idx = L.maxpool_forward(x, 2, 2)
        assert out[0, 0, 0, 0] == 1
        dx = L.maxpool_backward(np.ones_like(out), idx, 2, 2, 2)
        assert dx[0, 0].tolist() == [[1, 0], [0, 0]]

    def test_all_zero_window_routes_to_first(self):
        out, idx = L.maxpool_forward(np.zeros((1, 1, 2, 2)), 2, 2)
        dx = L.maxpool_backward(np.full_like(out, 3.0), idx, 2, 2, 2)
        assert dx[0, 0, 0, 0] == 3.0 and dx.sum() == 3.0

    def test_values(self):
        x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
        out, _ = L.maxpool_forward(x, 2, 2)
        assert out[0, 0].tolist() == [[5, 7], [13, 15]]
