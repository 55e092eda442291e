"""Adaptive private mean estimation for concentrated queries.

Each query is gated by an AboveThreshold test on the concentration score,
then users are kept with a probability that depends on how many other users
lie within ``2 * tau`` of them, and the mean of the kept users is released
with Gaussian noise. One AboveThreshold instance serves the whole stream.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import (
    InvalidParameterError,
    PrivacyBudget,
    RngStream,
    UsageError,
    UserDataset,
    sample_gaussian_vector,
)
from .sparse_vector import Answer, ATState, at_init, at_step

# A one-user swap moves the concentration score by at most (2n - 1)/n < 2.
SCORE_SENSITIVITY = 2.0


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise InvalidParameterError("need a non-empty (n, d) array of points")
    return pts


def _check_tau(tau):
    if not tau > 0:
        raise InvalidParameterError(f"tau must be positive, got {tau}")


def pairwise_distances(points) -> np.ndarray:
    pts = _as_points(points)
    return cdist(pts, pts)


def concentration_score(points, tau: float) -> float:
    """``(1/n) * #{(j, k) : ||x_j - x_k|| <= tau}``, self-pairs included."""
    _check_tau(tau)
    pts = _as_points(points)
    return float(np.count_nonzero(cdist(pts, pts) <= tau)) / pts.shape[0]


def outlier_scores(points, tau: float) -> np.ndarray:
    """For each point, how many points (itself included) lie within ``2 * tau``."""
    _check_tau(tau)
    pts = _as_points(points)
    return np.count_nonzero(cdist(pts, pts) <= 2.0 * tau, axis=1)


def selection_probabilities(f, n: int) -> np.ndarray:
    """Vectorised piecewise keep-probability: 0 below n/2, 1 from 2n/3, linear between."""
    f = np.asarray(f)
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    if np.any(f < 0) or np.any(f > n):
        raise InvalidParameterError(f"outlier scores must lie in [0, {n}]")
    f = f.astype(np.float64)
    mid = (f - n / 2.0) / (n / 6.0)
    return np.where(f < n / 2.0, 0.0, np.where(f >= 2.0 * n / 3.0, 1.0, mid))


def selection_probability(f_j: int, n: int) -> float:
    return float(selection_probabilities(f_j, n))


def subsample(p, rng: RngStream) -> np.ndarray:
    """Indices kept by independent Bernoulli(p_j) draws."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise InvalidParameterError("probabilities must lie in [0, 1]")
    return np.flatnonzero(rng.generator.random(p.shape) < p)


def noise_variance(n: int, tau: float, T: int, epsilon: float, delta: float) -> float:
    """Per-coordinate Gaussian variance for ``T`` queries under ``(epsilon, delta)``.

    ``8 tau^2 T ln(e^eps T / delta) ln(e^{eps/2} / delta) / (n^2 eps^2)``.
    """
    return (8.0 * tau**2 * T * (epsilon + math.log(T / delta))
            * (epsilon / 2.0 + math.log(1.0 / delta)) / (n**2 * epsilon**2))


def min_users_for_utility(T: int, delta: float, epsilon: float, gamma: float | None = None) -> float:
    """``(8 ln(T/gamma) + 8 ln(T/delta)) / epsilon``; ``gamma`` defaults to ``delta``."""
    gamma = delta if gamma is None else gamma
    return (8.0 * math.log(T / gamma) + 8.0 * math.log(T / delta)) / epsilon


@dataclass
class QueryResult:
    """Answer to one mean query.

    ``selected_count`` and ``score`` are diagnostics computed on raw data; they
    are not privatised and must not be released.
    """

    estimate: np.ndarray | None
    selected_count: int = 0
    score: float = float("nan")
    halted: bool = False

    def __bool__(self) -> bool:
        return not self.halted


HALTED = QueryResult(estimate=None, halted=True)


@dataclass
class MeanSession:
    dataset: UserDataset
    budget: PrivacyBudget
    tau: float
    T: int
    at: ATState
    noise_variance: float
    streams: tuple  # (threshold test, selection, Gaussian noise)
    queries_used: int = 0
    halted: bool = False
    sensitivity: float = SCORE_SENSITIVITY

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def remaining(self) -> int:
        return self.T - self.queries_used

    def evaluate(self, query, batched: bool = False) -> np.ndarray:
        items = self.dataset.items
        if batched:
            pts = np.asarray(query(items), dtype=np.float64)
        else:
            pts = np.array([np.atleast_1d(query(items[j])) for j in range(items.shape[0])],
                           dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] != items.shape[0]:
            raise InvalidParameterError(f"query must give one vector per user, got {pts.shape}")
        return pts

    def query(self, query, batched: bool = False) -> QueryResult:
        """Answer one adaptive mean query.

        ``query`` maps one user's ``(m, d)`` items to a vector, or with
        ``batched=True`` maps the full ``(n, m, d)`` array to ``(n, k)``.
        Once the gate has fired every call returns :data:`HALTED`.
        """
        if self.halted:
            return HALTED
        if self.queries_used >= self.T:
            raise UsageError(f"session budget of {self.T} queries is exhausted")
        self.queries_used += 1
        pts = self.evaluate(query, batched)
        n = pts.shape[0]
        dist = cdist(pts, pts)
        score = float(np.count_nonzero(dist <= self.tau)) / n
        if at_step(self.at, score, self.streams[0]) is Answer.BOTTOM:
            self.halted = True
            return HALTED
        f = np.count_nonzero(dist <= 2.0 * self.tau, axis=1)
        keep = subsample(selection_probabilities(f, n), self.streams[1])
        g = pts[keep].mean(axis=0) if keep.size else np.zeros(pts.shape[1])
        nu = sample_gaussian_vector(self.noise_variance, pts.shape[1], self.streams[2])
        return QueryResult(estimate=g + nu, selected_count=int(keep.size), score=score)


def open_session(dataset: UserDataset, budget: PrivacyBudget, tau: float, T: int,
                 rng: RngStream, sensitivity: float = SCORE_SENSITIVITY) -> MeanSession:
    """Start a session answering up to ``T`` adaptive queries.

    The gate is AboveThreshold at threshold ``4n/5`` with budget ``epsilon/2``.
    """
    if not isinstance(budget, PrivacyBudget):
        budget = PrivacyBudget(*budget)
    _check_tau(tau)
    if int(T) < 1:
        raise InvalidParameterError(f"T must be >= 1, got {T}")
    n = dataset.n
    need = min_users_for_utility(T, budget.delta, budget.epsilon)
    if n < need:
        warnings.warn(f"n={n} users is below the utility requirement ~{need:.1f}; "
                      "expect early halting", stacklevel=2)
    streams = (rng.child(0), rng.child(1), rng.child(2))
    at = at_init(0.8 * n, budget.epsilon / 2.0, sensitivity, streams[0])
    return MeanSession(dataset=dataset, budget=budget, tau=float(tau), T=int(T), at=at,
                       noise_variance=noise_variance(n, tau, T, budget.epsilon, budget.delta),
                       streams=streams, sensitivity=sensitivity)
