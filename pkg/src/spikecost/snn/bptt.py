"""Unrolled LIF forward pass and backpropagation through time.

Hidden conv/FC layers are LIF neurons driven by the spikes of the layer
below (after any max-pooling). The final FC layer integrates its input
without leak and never fires; its potential after the last timestep is the
logit vector.

Backward recursion, per hidden layer ``l`` from the last timestep down::

    dS[t] = dU[t+1] * (-alpha * U[t]) + dH[t]
    dU[t] = dU[t+1] * alpha * (1 - S[t]) + dS[t] * f'(U[t])

with ``dU[T+1] = 0`` and ``dH[t]`` the gradient routed down from layer
``l+1`` through its transposed weights (and any pooling in between).
In sparse mode ``dS`` is only evaluated where ``f'(U) != 0`` and the
transposed convolution skips output positions whose ``dU`` is all zero.
Both modes give bit-identical ``dU``, ``dH`` and ``dW``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import StateError, StructuralError
from ..network import FC, Conv, NetworkSpec, Pool
from . import layers as L
from .lif import LifParams, surrogate_mask


@dataclass
class ForwardRecord:
    """Everything BPTT needs from the forward pass.

    Per weighted layer (indexed like ``net.weighted``): ``inputs`` is the spike
    operand the layer multiplies (pooled and flattened as needed), ``U`` the
    membrane potentials and ``S`` the output spikes; arrays are ``(T, B, ...)``.
    The output layer has ``S[-1] is None``.
    """

    T: int
    spikes_in: np.ndarray
    inputs: list[np.ndarray]
    U: list[np.ndarray]
    S: list[Optional[np.ndarray]]
    pool_idx: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def logits(self) -> np.ndarray:
        return self.U[-1][-1]


@dataclass
class GradientRecord:
    """BPTT gradients per weighted layer.

    ``grad_h[l]`` is the gradient arriving at layer ``l``'s spikes from the
    layer above, ``grad_s``/``grad_u`` the spike and potential gradients, and
    ``grad_w`` the weight gradient summed over timesteps. Output-layer entries
    of ``grad_h``/``grad_s`` are ``None``.
    """

    grad_u: list[np.ndarray]
    grad_s: list[Optional[np.ndarray]]
    grad_h: list[Optional[np.ndarray]]
    grad_w: list[np.ndarray]


def init_weights(net: NetworkSpec, seed=0, gain: float = 1.0, dtype=np.float64) -> list[np.ndarray]:
    """Zero-mean normal weights scaled by ``gain * sqrt(2 / fan_in)``."""
    rng = np.random.default_rng(seed)
    weights = []
    for layer in net.weighted:
        shape = layer.weight_shape
        fan_in = int(np.prod(shape[1:]))
        weights.append((rng.standard_normal(shape) * gain * np.sqrt(2.0 / fan_in)).astype(dtype))
    return weights


def _check_weights(net: NetworkSpec, weights) -> None:
    if len(weights) != len(net.weighted):
        raise StructuralError(f"expected {len(net.weighted)} weight tensors, got {len(weights)}")
    for layer, w in zip(net.weighted, weights):
        if tuple(w.shape) != layer.weight_shape:
            raise StructuralError(f"{layer.name}: weight shape {w.shape} != {layer.weight_shape}")


def _fold(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0] * x.shape[1], *x.shape[2:])


def forward_pass(net: NetworkSpec, weights, spike_input, p: LifParams) -> ForwardRecord:
    """Run the unrolled network on a ``(T, B, C, H, W)`` spike tensor."""
    _check_weights(net, weights)
    x = np.asarray(spike_input)
    if x.ndim != len(net.input_shape) + 2 or tuple(x.shape[2:]) != tuple(net.input_shape):
        raise StructuralError(f"input must be (T, B, {net.input_shape}), got {x.shape}")
    T, B = x.shape[:2]
    if T < 1:
        raise StructuralError("input spans no timesteps")
    dtype = np.result_type(weights[0].dtype, np.float32)
    cur = x.astype(dtype)
    inputs, U, S = [], [], []
    pool_idx = {}
    wi = 0
    last = len(net.weighted) - 1
    for layer in net.layers:
        if isinstance(layer, Pool):
            pooled, idx = L.maxpool_forward(_fold(cur), layer.window, layer.stride)
            pool_idx[layer.name] = idx
            cur = pooled.reshape(T, B, *pooled.shape[1:])
            continue
        w = weights[wi]
        if isinstance(layer, FC):
            cur = cur.reshape(T, B, -1)
            drive = L.fc_forward(_fold(cur), w).reshape(T, B, -1)
        else:
            drive = L.conv_forward(_fold(cur), w, layer.stride, layer.pad)
            drive = drive.reshape(T, B, *drive.shape[1:])
        inputs.append(cur)
        if wi == last:
            U.append(np.cumsum(drive, axis=0))
            S.append(None)
        else:
            u_seq = np.empty_like(drive)
            s_seq = np.empty_like(drive)
            u = np.zeros_like(drive[0])
            s = np.zeros_like(drive[0])
            for t in range(T):
                u = p.alpha * u * (1 - s) + drive[t]
                s = (u > p.u_th).astype(dtype)
                u_seq[t] = u
                s_seq[t] = s
            U.append(u_seq)
            S.append(s_seq)
            cur = s_seq
        wi += 1
    return ForwardRecord(T, x, inputs, U, S, pool_idx)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def _route_down(net: NetworkSpec, record: ForwardRecord, wi: int, weights, grad_u_above: np.ndarray,
                skip_zero: bool) -> np.ndarray:
    """Gradient w.r.t. the spikes of weighted layer ``wi`` from layer ``wi + 1``."""
    T, B = grad_u_above.shape[:2]
    above = net.weighted[wi + 1]
    w = weights[wi + 1]
    if isinstance(above, FC):
        g = L.fc_backward_input(_fold(grad_u_above), w, skip_zero=skip_zero)
    else:
        g = L.conv_backward_input(_fold(grad_u_above), w, above.in_size, above.stride, above.pad,
                                  skip_zero=skip_zero)
    # undo flatten / pooling between the two weighted layers
    pos = net.layers.index(above)
    below = net.weighted[wi]
    between = net.layers[net.layers.index(below) + 1:pos]
    for pool in reversed(between):
        g = g.reshape(T * B, pool.channels, pool.out_size, pool.out_size)
        g = L.maxpool_backward(g, record.pool_idx[pool.name], pool.in_size, pool.window, pool.stride)
    return g.reshape(T, B, *below.out_shape)


def backward_pass(record: ForwardRecord, loss_grad, net: NetworkSpec, weights, p: LifParams,
                  sparse_mode: bool = False) -> GradientRecord:
    """BPTT over the stored forward record.

    ``loss_grad`` is dL/dlogits of shape ``(B, classes)``; it is the potential
    gradient of the (non-leaky) output layer at every timestep.
    """
    _check_weights(net, weights)
    n = len(net.weighted)
    if len(record.U) != n or len(record.S) != n or len(record.inputs) != n:
        raise StateError("forward record does not cover every weighted layer")
    T = record.T
    for l in range(n):
        if record.U[l] is None or record.U[l].shape[0] != T:
            raise StateError(f"layer {l}: potentials missing or not spanning {T} timesteps")
        if l < n - 1 and (record.S[l] is None or record.S[l].shape[0] != T):
            raise StateError(f"layer {l}: spikes missing or not spanning {T} timesteps")
    loss_grad = np.asarray(loss_grad, dtype=record.U[-1].dtype)
    if loss_grad.shape != record.U[-1].shape[1:]:
        raise StructuralError(f"loss gradient shape {loss_grad.shape} != {record.U[-1].shape[1:]}")

    grad_u: list = [None] * n
    grad_s: list = [None] * n
    grad_h: list = [None] * n
    grad_w: list = [None] * n
    grad_u[-1] = np.broadcast_to(loss_grad, record.U[-1].shape).copy()

    alpha = p.alpha
    inv_beta = 1.0 / p.beta
    for l in range(n - 2, -1, -1):
        dH = _route_down(net, record, l, weights, grad_u[l + 1], skip_zero=sparse_mode)
        U, S = record.U[l], record.S[l]
        dU = np.empty_like(U)
        dS = np.zeros_like(U) if sparse_mode else np.empty_like(U)
        nxt = np.zeros_like(U[0])
        for t in range(T - 1, -1, -1):
            carry = nxt * alpha * (1 - S[t])
            valid = surrogate_mask(U[t], p)
            if sparse_mode:
                # f'(U) == 0: dS is never formed, dU is just the leaked carry
                ds = dS[t]
                ds[valid] = nxt[valid] * (-alpha * U[t][valid]) + dH[t][valid]
                du = carry
                du[valid] = carry[valid] + ds[valid] * inv_beta
            else:
                ds = nxt * (-alpha * U[t]) + dH[t]
                dS[t] = ds
                du = carry + ds * np.where(valid, inv_beta, 0.0).astype(U.dtype)
            # canonicalise signed zeros so both modes agree bit for bit
            du += 0.0
            dU[t] = du
            nxt = du
        grad_u[l], grad_s[l], grad_h[l] = dU, dS, dH

    for l, layer in enumerate(net.weighted):
        x = _fold(record.inputs[l])
        du = _fold(grad_u[l])
        if isinstance(layer, FC):
            grad_w[l] = L.fc_backward_weight(x.reshape(x.shape[0], -1), du)
        else:
            grad_w[l] = L.conv_backward_weight(x, du, layer.kernel, layer.stride, layer.pad)
    return GradientRecord(grad_u, grad_s, grad_h, grad_w)


class SGD:
    """SGD with momentum and L2 weight decay (decay folded into the gradient)."""

    def __init__(self, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: Optional[list[np.ndarray]] = None

    def step(self, weights, grads) -> list[np.ndarray]:
        if self.velocity is None:
            self.velocity = [np.zeros_like(w) for w in weights]
        out = []
        for i, (w, g) in enumerate(zip(weights, grads)):
            d = g + self.weight_decay * w if self.weight_decay else g
            if self.momentum:
                self.velocity[i] = self.momentum * self.velocity[i] + d
                d = self.velocity[i]
            out.append(w - self.lr * d)
        return out


def weight_update(weights, grads: GradientRecord, lr: float, momentum: float = 0.0,
                  weight_decay: float = 0.0, optimizer: Optional[SGD] = None) -> list[np.ndarray]:
    """Apply ``W -= lr * sum_t dU[t] (x) S_in[t]`` (with momentum / decay if set)."""
    if any(g is None for g in grads.grad_w):
        raise StateError("gradient record is missing weight gradients")
    opt = optimizer or SGD(lr, momentum, weight_decay)
    return opt.step(weights, grads.grad_w)
