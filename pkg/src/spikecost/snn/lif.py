"""Leaky integrate-and-fire primitives: rate encoding, one LIF step, surrogate gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InputDomainError, StructuralError


@dataclass(frozen=True)
class LifParams:
    """Leak factor, firing threshold and surrogate firing width."""

    alpha: float = 0.94
    u_th: float = 0.75
    beta: float = 2.5

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InputDomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.beta > 0.0:
            raise InputDomainError(f"beta must be positive, got {self.beta}")
        if not math.isfinite(self.u_th):
            raise InputDomainError("u_th must be finite")


def poisson_encode(image, T: int, seed=None) -> np.ndarray:
    """Rate-code pixel intensities in [0, 1] into a binary spike train.

    Returns an array of shape ``(T, *image.shape)`` where every pixel spikes
    independently at each timestep with probability equal to its intensity.
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    image = np.asarray(image, dtype=np.float64)
    if T < 1:
        raise InputDomainError(f"T must be >= 1, got {T}")
    if image.size and (np.isnan(image).any() or image.min() < 0.0 or image.max() > 1.0):
        raise InputDomainError("pixel intensities must lie in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = rng.random((T, *image.shape))
    return (draws < image).astype(np.uint8)


def lif_step(u_prev, s_prev, weighted_input, p: LifParams):
    """Advance membrane potentials by one timestep.

    ``u = alpha * u_prev * (1 - s_prev) + weighted_input`` and ``s = [u > u_th]``.
    The returned potential is the pre-reset value; the reset is applied by the
    ``(1 - s_prev)`` factor on the following step.
    """
    u_prev = np.asarray(u_prev)
    s_prev = np.asarray(s_prev)
    weighted_input = np.asarray(weighted_input)
    if not (u_prev.shape == s_prev.shape == weighted_input.shape):
        raise StructuralError(
            f"shape mismatch: u {u_prev.shape}, s {s_prev.shape}, input {weighted_input.shape}"
        )
    u = p.alpha * u_prev * (1 - s_prev) + weighted_input
    s = (u > p.u_th).astype(u.dtype if u.dtype.kind == "f" else np.float64)
    return u, s


def surrogate_mask(u, p: LifParams) -> np.ndarray:
    """True where the surrogate derivative is non-zero (strictly inside the window)."""
    return np.abs(np.asarray(u) - p.u_th) < p.beta / 2


def surrogate_grad(u, p: LifParams):
    """Rectangular surrogate of the Heaviside derivative: ``1/beta`` inside the window, else 0."""
    inside = surrogate_mask(u, p)
    if np.ndim(inside) == 0:
        return 1.0 / p.beta if inside else 0.0
    return np.where(inside, 1.0 / p.beta, 0.0)
