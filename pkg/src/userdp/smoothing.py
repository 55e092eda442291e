"""Randomized smoothing by convolution with the uniform ball density.

Gradients of the smoothed loss are estimated by evaluating the raw
subgradient at ``theta + y`` with ``y`` uniform in the ball of radius ``r``.
A radius of zero is allowed and means no perturbation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidParameterError, RngStream, sample_uniform_ball
from .losses import LossOracle, MCEstimate


@dataclass(frozen=True)
class SmoothingParams:
    r: float
    mc_samples: int = 1000

    def __post_init__(self):
        if not self.r > 0:
            raise InvalidParameterError(f"smoothing radius must be positive, got {self.r}")
        if self.mc_samples < 1:
            raise InvalidParameterError("mc_samples must be >= 1")


def _perturb(theta, r: float, d: int, rng: RngStream, size=None) -> np.ndarray:
    if r < 0:
        raise InvalidParameterError(f"smoothing radius must be non-negative, got {r}")
    if r == 0:
        shape = (d,) if size is None else tuple(np.atleast_1d(size)) + (d,)
        return np.zeros(shape)
    return sample_uniform_ball(r, d, rng, size=size)


def smoothed_grad_item(loss: LossOracle, theta, z, r: float, rng: RngStream) -> np.ndarray:
    """One stochastic gradient of the smoothed loss at ``theta`` for item ``z``."""
    theta = np.asarray(theta, dtype=np.float64)
    loss.check_extended(theta, r)
    y = _perturb(theta, r, theta.shape[-1], rng)
    return loss.subgradient(theta + y, z)


def user_avg_smoothed_grad(loss: LossOracle, theta, user, r: float, rng: RngStream) -> np.ndarray:
    """Average over one user's ``m`` items, each with its own perturbation."""
    user = np.asarray(user, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    loss.check_extended(theta, r)
    y = _perturb(theta, r, theta.shape[-1], rng, size=user.shape[0])
    return loss.subgradient(theta + y, user).mean(axis=0)


def users_avg_smoothed_grad(loss: LossOracle, theta, items, r: float, rng: RngStream) -> np.ndarray:
    """Batched :func:`user_avg_smoothed_grad` over an ``(n, m, d)`` array; returns ``(n, d)``."""
    items = np.asarray(items, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    loss.check_extended(theta, r)
    y = _perturb(theta, r, items.shape[-1], rng, size=items.shape[:-1])
    return loss.subgradient(theta + y, items).mean(axis=-2)


def smoothed_value_mc(loss: LossOracle, theta, z, r: float, k: int, rng: RngStream) -> MCEstimate:
    """Monte-Carlo value of the smoothed loss from ``k`` perturbations, with standard error."""
    theta = np.asarray(theta, dtype=np.float64)
    if r == 0:
        return MCEstimate(float(loss.value(theta, z)), 0.0)
    if k < 2:
        raise InvalidParameterError("need k >= 2 draws for a standard error")
    loss.check_extended(theta, r)
    y = _perturb(theta, r, theta.shape[-1], rng, size=k)
    vals = loss.value(theta + y, z)
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(k)))


def smoothness_constant(G: float, d: int, r: float) -> float:
    """Gradient-Lipschitz constant ``G sqrt(d) / r`` of the ball-smoothed loss."""
    return G * math.sqrt(d) / r
