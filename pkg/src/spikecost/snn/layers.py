"""im2col convolution, its transposes, and spike max-pooling.

All routines take a flat leading batch axis ``N`` (timesteps are folded into
it by the caller). Layouts are NCHW for maps and ``(K, C, R, R)`` for filters.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def im2col(x: np.ndarray, kernel: int, stride: int, pad: int) -> np.ndarray:
    """Rows are output positions ``(n, e1, e2)``; columns are ``(c, r1, r2)``."""
    n, c = x.shape[:2]
    win = sliding_window_view(_pad(x, pad), (kernel, kernel), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    e = win.shape[2]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * e * e, c * kernel * kernel)


def col2im(cols: np.ndarray, n: int, c: int, in_size: int, kernel: int, stride: int,
           pad: int, out_size: int) -> np.ndarray:
    """Scatter-add patch columns back onto the (unpadded) input map."""
    cols = cols.reshape(n, out_size, out_size, c, kernel, kernel)
    size = in_size + 2 * pad
    x = np.zeros((n, c, size, size), dtype=cols.dtype)
    span = stride * (out_size - 1) + 1
    for i in range(kernel):
        for j in range(kernel):
            x[:, :, i:i + span:stride, j:j + span:stride] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if pad:
        x = x[:, :, pad:size - pad, pad:size - pad]
    return x


def gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product that always goes through the general (gemm) path.

    Single-row/column operands would otherwise be routed to gemv, whose
    accumulation order differs; keeping one kernel makes row subsets of a
    product bit-identical to the full product.
    """
    if a.shape[0] == 1:
        return gemm(np.concatenate([a, np.zeros_like(a)]), b)[:1]
    if b.shape[1] == 1:
        return gemm(a, np.concatenate([b, np.zeros_like(b)], axis=1))[:, :1]
    return a @ b


def conv_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    n = x.shape[0]
    k, _, r, _ = w.shape
    cols = im2col(x, r, stride, pad)
    e = int(round((cols.shape[0] // n) ** 0.5))
    out = gemm(cols, w.reshape(k, -1).T)
    return out.reshape(n, e, e, k).transpose(0, 3, 1, 2)


def conv_backward_input(dy: np.ndarray, w: np.ndarray, in_size: int, stride: int, pad: int,
                        skip_zero: bool = False) -> np.ndarray:
    """Gradient w.r.t. the conv input: convolution with the transposed filters.

    With ``skip_zero`` only output positions carrying a non-zero gradient in
    some channel are multiplied; the skipped rows are exactly zero either way.
    """
    n, k, e, _ = dy.shape
    _, c, r, _ = w.shape
    rows = dy.transpose(0, 2, 3, 1).reshape(n * e * e, k)
    wmat = w.reshape(k, c * r * r)
    if skip_zero:
        live = np.flatnonzero(rows.any(axis=1))
        cols = np.zeros((rows.shape[0], c * r * r), dtype=np.result_type(dy, w))
        if live.size:
            cols[live] = gemm(rows[live], wmat)
    else:
        cols = gemm(rows, wmat)
    return col2im(cols, n, c, in_size, r, stride, pad, e)


def conv_backward_weight(x: np.ndarray, dy: np.ndarray, kernel: int, stride: int, pad: int) -> np.ndarray:
    """Filter gradient summed over the whole leading axis."""
    n, k, e, _ = dy.shape
    cols = im2col(x, kernel, stride, pad)
    rows = dy.transpose(0, 2, 3, 1).reshape(n * e * e, k)
    return gemm(rows.T, cols).reshape(k, x.shape[1], kernel, kernel)


def fc_forward(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return gemm(x, w.T)


def fc_backward_input(dy: np.ndarray, w: np.ndarray, skip_zero: bool = False) -> np.ndarray:
    if skip_zero:
        live = np.flatnonzero(dy.any(axis=1))
        out = np.zeros((dy.shape[0], w.shape[1]), dtype=np.result_type(dy, w))
        if live.size:
            out[live] = gemm(dy[live], w)
        return out
    return gemm(dy, w)


def fc_backward_weight(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return gemm(dy.T, x)


def maxpool_forward(x: np.ndarray, window: int, stride: int):
    """Max over each window; ties go to the lowest flat index in the window.

    Returns the pooled map and the flat in-window argmax per output element.
    """
    n, c, _, _ = x.shape
    win = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    e = win.shape[2]
    flat = win.reshape(n, c, e, e, window * window)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool_backward(dy: np.ndarray, idx: np.ndarray, in_size: int, window: int, stride: int) -> np.ndarray:
    """Route each output gradient to the selected input element."""
    n, c, e, _ = dy.shape
    dx = np.zeros((n, c, in_size, in_size), dtype=dy.dtype)
    rows = np.arange(e)[:, None] * stride + idx // window
    cols = np.arange(e)[None, :] * stride + idx % window
    if stride >= window:
        # windows do not overlap, so a plain scatter is exact
        ni, ci = np.meshgrid(np.arange(n), np.arange(c), indexing="ij")
        dx[ni[:, :, None, None], ci[:, :, None, None], rows, cols] = dy
    else:
        ni = np.broadcast_to(np.arange(n)[:, None, None, None], dy.shape)
        ci = np.broadcast_to(np.arange(c)[None, :, None, None], dy.shape)
        np.add.at(dx, (ni, ci, rows, cols), dy)
    return dx
