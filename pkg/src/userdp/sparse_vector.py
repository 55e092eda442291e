"""Streaming AboveThreshold with an explicit query sensitivity."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .core import InvalidParameterError, RngStream, UsageError, sample_laplace


class Answer(enum.Enum):
    TOP = "top"
    BOTTOM = "bottom"


@dataclass
class ATState:
    """Live AboveThreshold instance.

    The noisy threshold is drawn once in :func:`at_init`; after the first
    ``BOTTOM`` the instance is halted and refuses further steps.
    """

    threshold: float
    noisy_threshold: float
    epsilon_at: float
    sensitivity: float
    halted: bool = False
    steps: int = 0

    @property
    def query_noise_scale(self) -> float:
        return 4.0 * self.sensitivity / self.epsilon_at

    @property
    def threshold_noise_scale(self) -> float:
        return 2.0 * self.sensitivity / self.epsilon_at


def at_init(threshold: float, epsilon_at: float, sensitivity: float, rng: RngStream) -> ATState:
    if not epsilon_at > 0:
        raise InvalidParameterError(f"epsilon_at must be positive, got {epsilon_at}")
    if not sensitivity > 0:
        raise InvalidParameterError(f"sensitivity must be positive, got {sensitivity}")
    noise = sample_laplace(2.0 * sensitivity / epsilon_at, rng)
    return ATState(threshold=float(threshold), noisy_threshold=float(threshold) - noise,
                   epsilon_at=float(epsilon_at), sensitivity=float(sensitivity))


def at_step(state: ATState, query_value: float, rng: RngStream) -> Answer:
    """Compare one noisy query value with the noisy threshold.

    Returns ``TOP`` when ``query_value + Lap(4 * sensitivity / epsilon_at)`` is at
    least the noisy threshold; otherwise returns ``BOTTOM`` and halts ``state``.
    """
    if state.halted:
        raise UsageError("AboveThreshold instance has already halted")
    nu = sample_laplace(state.query_noise_scale, rng)
    state.steps += 1
    if query_value + nu < state.noisy_threshold:
        state.halted = True
        return Answer.BOTTOM
    return Answer.TOP


def utility_alpha(T: int, gamma: float, epsilon_at: float, sensitivity: float = 1.0) -> float:
    """Accuracy radius ``8 * sensitivity * ln(2T/gamma) / epsilon_at``.

    With probability at least ``1 - gamma`` over ``T`` queries, every ``TOP``
    query is at least ``threshold - alpha`` and the halting query is at most
    ``threshold + alpha``.
    """
    return 8.0 * sensitivity * math.log(2.0 * T / gamma) / epsilon_at
