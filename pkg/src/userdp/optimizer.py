"""User-level DP-SGD over the smoothed loss, and its localized variant.

DP-SGD obtains every gradient from a single :class:`MeanSession`; the query
at step ``t`` is each user's average smoothed gradient at the current
iterate. For strongly convex losses, :func:`localized_dpsgd` runs DP-SGD on
disjoint, doubling groups of users with shrinking distance bounds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .concentrated_mean import MeanSession, open_session
from .core import InvalidParameterError, PrivacyBudget, RngStream, UserDataset
from .losses import LossOracle, project
from .smoothing import users_avg_smoothed_grad

DEFAULT_T_CAP = 200_000
DEFAULT_C = 4.0


@dataclass
class SGDConfig:
    T: int
    eta: float
    r: float
    tau: float
    R_hat: float
    budget: PrivacyBudget
    theta0: np.ndarray
    t_cap: int = DEFAULT_T_CAP

    def __post_init__(self):
        self.theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=np.float64))
        for name in ("eta", "r", "tau", "R_hat"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.T < 1 or self.t_cap < 1:
            raise InvalidParameterError("T and t_cap must be >= 1")
        if self.T > self.t_cap:
            raise InvalidParameterError(f"T={self.T} exceeds t_cap={self.t_cap}")

    def replace(self, **changes) -> "SGDConfig":
        fields = dict(T=self.T, eta=self.eta, r=self.r, tau=self.tau, R_hat=self.R_hat,
                      budget=self.budget, theta0=self.theta0, t_cap=self.t_cap)
        fields.update(changes)
        return SGDConfig(**fields)

    def to_dict(self) -> dict:
        return {"T": self.T, "eta": self.eta, "r": self.r, "tau": self.tau, "R_hat": self.R_hat,
                "epsilon": self.budget.epsilon, "delta": self.budget.delta,
                "theta0": self.theta0.tolist(), "t_cap": self.t_cap}


def iteration_count(n: int, m: int, d: int, t_cap: int = DEFAULT_T_CAP) -> int:
    """``min(t_cap, ceil(m^2 n^2 + m n sqrt(d)))``."""
    return int(min(t_cap, math.ceil(m * m * n * n + m * n * math.sqrt(d))))


def step_size_terms(R_hat: float, G: float, n: int, m: int, d: int, T: int,
                    epsilon: float, delta: float) -> tuple[float, float, float]:
    """The three candidates whose minimum, times ``R_hat / G``, is the step size."""
    log_term = math.log(m * n * d / delta)
    privacy = math.sqrt(m) * n * epsilon / (T * math.sqrt(d * log_term**2))
    return privacy, T ** -0.75, math.sqrt(n * m) / T


def concentration_radius(G: float, n: int, m: int, d: int, T: int,
                         epsilon: float, delta: float) -> float:
    """``G ln(n d m e^eps T / delta) / sqrt(m)``."""
    return G * (math.log(n * d * m * T / delta) + epsilon) / math.sqrt(m)


def default_config(n: int, m: int, d: int, budget: PrivacyBudget, G: float, R: float,
                   t_cap: int = DEFAULT_T_CAP, theta0=None) -> SGDConfig:
    """Parameter schedule for DP-SGD with distance bound ``R`` (a diameter).

    ``theta0`` defaults to the origin; pass the domain centre for other domains.
    """
    if n < 1 or m < 1 or d < 1:
        raise InvalidParameterError("n, m, d must be >= 1")
    if not isinstance(budget, PrivacyBudget):
        budget = PrivacyBudget(*budget)
    eps, delta = budget.epsilon, budget.delta
    if n < math.log(m * d * n / delta) / eps:
        warnings.warn(f"n={n} is below ln(mdn/delta)/eps = "
                      f"{math.log(m * d * n / delta) / eps:.1f}", stacklevel=2)
    T = iteration_count(n, m, d, t_cap)
    eta = R / G * min(step_size_terms(R, G, n, m, d, T, eps, delta))
    return SGDConfig(
        T=T, eta=eta, r=d**0.25 * R / math.sqrt(T),
        tau=concentration_radius(G, n, m, d, T, eps, delta), R_hat=R, budget=budget,
        theta0=np.zeros(d) if theta0 is None else theta0, t_cap=t_cap,
    )


@dataclass
class DPSGDResult:
    theta_hat: np.ndarray
    halted: bool
    iterations: int
    last_iterate: np.ndarray
    trace: dict = field(default_factory=dict, repr=False)


def dpsgd(dataset: UserDataset, loss: LossOracle, config: SGDConfig, rng: RngStream,
          keep_iterates: bool = False) -> DPSGDResult:
    """Run DP-SGD; returns ``theta0`` with ``halted=True`` if the gate fires.

    The trace holds per-iteration ``selected_count`` and ``step_norm``, plus
    ``iterates`` (the points queried, ``theta_1 .. theta_T``) when
    ``keep_iterates`` is set. Counts and norms are computed from raw data and
    are for diagnostics only.
    """
    n, m, d = dataset.shape
    if config.theta0.shape != (d,) or loss.d != d:
        raise InvalidParameterError(
            f"dimension mismatch: data d={d}, theta0 {config.theta0.shape}, loss d={loss.d}")
    T, eta, r = config.T, config.eta, config.r
    session_budget = PrivacyBudget(config.budget.epsilon, config.budget.delta / (2 * T * m * n * d))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        session: MeanSession = open_session(dataset, session_budget, config.tau, T, rng.child(0))
    smooth_rng = rng.child(1)
    domain = loss.domain

    theta = config.theta0.copy()
    running = np.zeros(d)
    selected = np.zeros(T, dtype=np.int64)
    step_norm = np.zeros(T)
    iterates = np.zeros((T, d)) if keep_iterates else None
    for t in range(T):
        running += theta
        if keep_iterates:
            iterates[t] = theta
        point = theta
        result = session.query(
            lambda items: users_avg_smoothed_grad(loss, point, items, r, smooth_rng),
            batched=True,
        )
        if result.halted:
            trace = {"selected_count": selected[:t], "step_norm": step_norm[:t], "halted_at": t + 1}
            if keep_iterates:
                trace["iterates"] = iterates[:t + 1]
            return DPSGDResult(config.theta0.copy(), True, t + 1, theta, trace)
        step = eta * result.estimate
        selected[t] = result.selected_count
        step_norm[t] = math.sqrt(float(step @ step))
        theta = project(domain, theta - step)
    trace = {"selected_count": selected, "step_norm": step_norm, "halted_at": None}
    if keep_iterates:
        trace["iterates"] = iterates
    return DPSGDResult(running / T, False, T, theta, trace)


# ---------------------------------------------------------------------------
# localization for strongly convex losses
# ---------------------------------------------------------------------------


def phase_count(n: int, m: int) -> int:
    """``ceil(log2 log2 (m n))``, at least 1."""
    mn = n * m
    if mn <= 2:
        return 1
    return max(1, math.ceil(math.log2(math.log2(mn))))


def phase_sizes(n: int, k: int) -> list[int]:
    """``floor(n / 2^(k+1-i))`` for ``i = 1..k``.

    The sizes cover ``n - n/2^k`` users; whatever floor rounding drops from
    that total goes to the last phase. The remaining ``n/2^k`` users are unused.
    """
    sizes = [n // 2 ** (k + 1 - i) for i in range(1, k + 1)]
    sizes[-1] += (n - n // 2**k) - sum(sizes)
    return sizes


def _excess_bound(n_i: float, m: int, d: int, budget: PrivacyBudget, G: float, mu: float,
                  C: float) -> float:
    eps, delta = budget.epsilon, budget.delta
    return 4 * C * C * G * G / mu * (
        1.0 / (n_i * m) + d * math.log(n_i * d * m / delta) ** 2 / (n_i**2 * eps**2 * m))


@dataclass
class LocalizationSchedule:
    k: int
    n_i: list
    E: list  # E_0 .. E_k
    D: list  # D_0 .. D_k
    R_hat_i: list  # used per phase, capped at the domain diameter
    configs: list  # SGDConfig per phase, theta0 filled in at run time
    C: float
    R_hat_bound: list = field(default_factory=list)  # sqrt(2 D_{j-1} / mu) before capping

    @property
    def T_i(self) -> list:
        return [c.T for c in self.configs]

    @property
    def r_i(self) -> list:
        return [c.r for c in self.configs]

    @property
    def eta_i(self) -> list:
        return [c.eta for c in self.configs]

    @property
    def tau_i(self) -> list:
        return [c.tau for c in self.configs]

    def chain_holds(self, rtol: float = 1e-12) -> bool:
        """``sqrt(D_{j-1} E_j) <= D_j`` for every phase."""
        return all(math.sqrt(self.D[j - 1] * self.E[j]) <= self.D[j] * (1 + rtol)
                   for j in range(1, self.k + 1))

    def terminal_ratio(self) -> float:
        """``D_k / E_k``; at most 32 when ``k`` is large enough."""
        return self.D[-1] / self.E[-1]

    def to_dict(self) -> dict:
        return {"k": self.k, "n_i": self.n_i, "E": self.E, "D": self.D, "R_hat_i": self.R_hat_i,
                "R_hat_bound": self.R_hat_bound, "T_i": self.T_i, "r_i": self.r_i, "eta_i": self.eta_i, "tau_i": self.tau_i,
                "C": self.C}


def min_users_for_localization(n: int, m: int) -> int:
    k = phase_count(n, m)
    return 2**k * k


def localization_schedule(n: int, m: int, d: int, budget: PrivacyBudget, G: float, mu: float,
                          C: float = DEFAULT_C, t_cap: int = DEFAULT_T_CAP,
                          R: float = math.inf) -> LocalizationSchedule:
    """Phase sizes and per-phase DP-SGD parameters.

    ``E_0`` uses the real-valued size ``n / 2^(k+1)``, continuing the doubling
    sequence one step back; ``D_0 = 2 G^2 / mu`` follows from the definition.
    Each phase's distance bound ``sqrt(2 D_{j-1} / mu)`` is capped at the
    domain diameter ``R``, which bounds the distance to the optimum anyway.
    """
    if not mu > 0:
        raise InvalidParameterError("localization needs a strongly convex loss (mu > 0)")
    if not C > 2:
        raise InvalidParameterError(f"the analysis constant C must exceed 2, got {C}")
    k = phase_count(n, m)
    need = 2**k * k
    if n < need:
        raise InvalidParameterError(f"{k} phases need at least n={need} users, got n={n}")
    sizes = phase_sizes(n, k)
    E = [_excess_bound(n / 2 ** (k + 1), m, d, budget, G, mu, C)]
    E += [_excess_bound(s, m, d, budget, G, mu, C) for s in sizes]
    base = 2 * G * G / (mu * 16 * E[0])
    D = [16 * E[i] * base ** (1.0 / 2**i) for i in range(k + 1)]
    bound = [math.sqrt(2 * D[j - 1] / mu) for j in range(1, k + 1)]
    R_hat = [min(b, R) for b in bound]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        configs = [default_config(s, m, d, budget, G, Rj, t_cap) for s, Rj in zip(sizes, R_hat)]
    return LocalizationSchedule(k=k, n_i=sizes, E=E, D=D, R_hat_i=R_hat, configs=configs, C=C,
                                R_hat_bound=bound)


@dataclass
class LocalizedResult:
    theta_hat: np.ndarray
    schedule: LocalizationSchedule
    phases: list

    @property
    def halted(self) -> bool:
        """True when any phase fell back to its starting point."""
        return any(p.halted for p in self.phases)


def localized_dpsgd(dataset: UserDataset, loss: LossOracle, budget: PrivacyBudget,
                    C: float = DEFAULT_C, t_cap: int = DEFAULT_T_CAP, rng: RngStream | None = None,
                    theta0=None) -> LocalizedResult:
    """Run DP-SGD on ``k`` disjoint user groups, warm-starting each phase."""
    if rng is None:
        raise InvalidParameterError("an RngStream is required")
    n, m, d = dataset.shape
    schedule = localization_schedule(n, m, d, budget, loss.G, loss.mu, C, t_cap,
                                     R=loss.domain.diameter)
    theta = loss.domain.center.copy() if theta0 is None else np.asarray(theta0, dtype=np.float64)
    # phases take the last sum(n_i) users in order; the first ones are left out
    start = n - sum(schedule.n_i)
    phases = []
    for j, (size, cfg) in enumerate(zip(schedule.n_i, schedule.configs)):
        part = dataset.subset(np.arange(start, start + size))
        start += size
        res = dpsgd(part, loss, cfg.replace(theta0=theta), rng.child(j))
        phases.append(res)
        theta = res.theta_hat
    return LocalizedResult(theta, schedule, phases)


# ---------------------------------------------------------------------------
# non-private baseline
# ---------------------------------------------------------------------------


def nonprivate_sgd(dataset: UserDataset, loss: LossOracle, T: int, eta, rng: RngStream,
                   theta0=None, batch: str = "item", r: float = 0.0) -> np.ndarray:
    """Projected (S)GD with iterate averaging over ``theta_1 .. theta_T``.

    ``eta`` is a constant or a callable ``t -> eta_t`` (``t`` starts at 1).
    ``batch="item"`` uses one uniformly drawn item per step; ``batch="full"``
    averages the (optionally smoothed) gradient over all items.
    """
    if batch not in ("item", "full"):
        raise InvalidParameterError(f"unknown batch mode {batch!r}")
    n, m, d = dataset.shape
    items = dataset.items.reshape(n * m, d)
    schedule = eta if callable(eta) else (lambda t: eta)
    theta = loss.domain.center.copy() if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    running = np.zeros(d)
    if batch == "item":
        picks = rng.generator.integers(0, n * m, size=T)
        for t in range(T):
            running += theta
            g = loss.subgradient(theta, items[picks[t]])
            theta = project(loss.domain, theta - schedule(t + 1) * g)
    else:
        smooth_rng = rng.child(1)
        for t in range(T):
            running += theta
            g = users_avg_smoothed_grad(loss, theta, items[None], r, smooth_rng)[0]
            theta = project(loss.domain, theta - schedule(t + 1) * g)
    return running / T
