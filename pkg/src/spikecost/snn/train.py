"""Mini-batch BPTT training loop with sparsity probing."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InputDomainError
from ..network import NetworkSpec
from .bptt import SGD, backward_pass, forward_pass, init_weights, softmax_cross_entropy
from .lif import LifParams, poisson_encode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    timesteps: int = 8
    lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 1
    batch_size: int = 32
    rng_seed: int = 0
    sparse_mode: bool = True
    dtype: str = "float32"
    init_gain: float = 1.0

    def __post_init__(self):
        if self.timesteps < 1:
            raise InputDomainError("timesteps must be >= 1")
        if not self.lr >= 0:
            raise InputDomainError("learning rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise InputDomainError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    accuracy: float
    images: int
    seconds: float


def _batch_seed(cfg: TrainConfig, epoch: int, batch: int) -> np.random.Generator:
    return np.random.default_rng([cfg.rng_seed, epoch, batch])


def feed_probe(probe, net: NetworkSpec, record, grads) -> None:
    names = net.layer_names
    probe.record_step("inp", "S", record.spikes_in)
    for l, name in enumerate(names):
        if record.S[l] is not None:
            probe.record_step(name, "S", record.S[l])
        probe.record_step(name, "gf", record.U[l])
        probe.record_step(name, "gu", grads.grad_u[l])


def train_epoch(net: NetworkSpec, weights, dataset, cfg: TrainConfig, p: LifParams, probe=None,
                optimizer: Optional[SGD] = None, epoch: int = 0):
    """One pass over ``dataset = (images, labels)``: encode, forward, loss, BPTT, update.

    Returns ``(weights, EpochMetrics)``. The shuffle order and every Poisson
    draw are derived from ``(cfg.rng_seed, epoch, batch)``, so a run is
    reproducible regardless of how many epochs preceded it.
    """
    images, labels = dataset
    n = len(images)
    if n == 0:
        raise InputDomainError("dataset is empty")
    opt = optimizer or SGD(cfg.lr, cfg.momentum, cfg.weight_decay)
    dtype = np.dtype(cfg.dtype)
    order = np.random.default_rng([cfg.rng_seed, epoch]).permutation(n)
    t0 = time.perf_counter()
    loss_sum = 0.0
    correct = 0
    for b, start in enumerate(range(0, n, cfg.batch_size)):
        idx = order[start:start + cfg.batch_size]
        x = poisson_encode(images[idx], cfg.timesteps, _batch_seed(cfg, epoch, b)).astype(dtype)
        y = labels[idx]
        record = forward_pass(net, weights, x, p)
        loss, g = softmax_cross_entropy(record.logits.astype(np.float64), y)
        grads = backward_pass(record, g.astype(dtype), net, weights, p, sparse_mode=cfg.sparse_mode)
        if probe is not None:
            feed_probe(probe, net, record, grads)
        weights = opt.step(weights, grads.grad_w)
        loss_sum += loss * len(idx)
        correct += int((record.logits.argmax(axis=1) == y).sum())
    metrics = EpochMetrics(epoch, loss_sum / n, correct / n, n, time.perf_counter() - t0)
    log.info("epoch %d: loss %.4f acc %.4f (%.1fs)", epoch, metrics.loss, metrics.accuracy, metrics.seconds)
    return weights, metrics


def evaluate(net: NetworkSpec, weights, dataset, cfg: TrainConfig, p: LifParams, batch_size: int = 256) -> float:
    """Test accuracy with a fixed encoding seed."""
    images, labels = dataset
    dtype = np.dtype(cfg.dtype)
    correct = 0
    for b, start in enumerate(range(0, len(images), batch_size)):
        x = poisson_encode(images[start:start + batch_size], cfg.timesteps,
                           np.random.default_rng([cfg.rng_seed, 10**6, b])).astype(dtype)
        record = forward_pass(net, weights, x, p)
        correct += int((record.logits.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return correct / len(images)


class Trainer:
    """Owns weights and optimizer state for a multi-epoch run."""

    def __init__(self, net: NetworkSpec, cfg: TrainConfig, p: LifParams, weights=None):
        self.net = net
        self.cfg = cfg
        self.p = p
        self.weights = weights if weights is not None else init_weights(
            net, cfg.rng_seed, gain=cfg.init_gain, dtype=np.dtype(cfg.dtype))
        self.optimizer = SGD(cfg.lr, cfg.momentum, cfg.weight_decay)
        self.epoch = 0

    def train_epoch(self, dataset, probe=None) -> EpochMetrics:
        self.epoch += 1
        self.weights, metrics = train_epoch(self.net, self.weights, dataset, self.cfg, self.p,
                                            probe=probe, optimizer=self.optimizer, epoch=self.epoch)
        return metrics


def measure_profile(net: NetworkSpec, weights, dataset, cfg: TrainConfig, p: LifParams, probe,
                    batch_size: int = 64) -> None:
    """Feed ``probe`` with one forward and backward pass per batch, leaving weights untouched."""
    images, labels = dataset
    if len(images) == 0:
        raise InputDomainError("dataset is empty")
    dtype = np.dtype(cfg.dtype)
    for b, start in enumerate(range(0, len(images), batch_size)):
        x = poisson_encode(images[start:start + batch_size], cfg.timesteps,
                           np.random.default_rng([cfg.rng_seed, 2 * 10**6, b])).astype(dtype)
        record = forward_pass(net, weights, x, p)
        _, g = softmax_cross_entropy(record.logits.astype(np.float64), labels[start:start + batch_size])
        grads = backward_pass(record, g.astype(dtype), net, weights, p, sparse_mode=cfg.sparse_mode)
        feed_probe(probe, net, record, grads)
