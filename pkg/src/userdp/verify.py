"""Executable checks for the guarantees the algorithms rely on.

Each check returns a :class:`CheckReport`. Exact checks have no randomness in
the statistic; statistical checks use 3-sigma slack and record the seed, so a
report can be replayed to the identical statistic.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .concentrated_mean import (
    noise_variance,
    open_session,
    outlier_scores,
    selection_probabilities,
)
from .core import InvalidParameterError, NoiseHook, PrivacyBudget, RngStream, UserDataset
from .losses import BallDomain, LossOracle, NormLoss, PopulationSpec, sample_items
from .optimizer import default_config, localization_schedule, step_size_terms
from .smoothing import smoothness_constant, users_avg_smoothed_grad
from .sparse_vector import Answer, at_init, at_step, utility_alpha


@dataclass
class CheckReport:
    name: str
    passed: bool
    statistic: float
    bound: float
    trials: int
    seed: int | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = bool(self.passed)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), default=_jsonable, sort_keys=False)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.name}: statistic={self.statistic:.6g} bound={self.bound:.6g} "
                f"trials={self.trials}")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, CheckReport):
        return obj.to_dict()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _sigma(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / trials)


# ---------------------------------------------------------------------------
# selection-probability sensitivity
# ---------------------------------------------------------------------------


def selection_vector(points, tau: float) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return selection_probabilities(outlier_scores(pts, tau), pts.shape[0])


def lipschitz_sensitivity_bound(n: int) -> float:
    """Worst-case l1 change of the keep probabilities under one replacement.

    The replaced user's probability can move by 1. Every other user's
    neighbour count moves by at most 1, and the keep probability ramps from 0
    to 1 over a window of width ``n/6``, so each of them moves by at most
    ``min(1, 6/n)``.
    """
    return 1.0 + (n - 1) * min(1.0, 6.0 / n)


def check_prob_sensitivity(points, replacement, index: int, tau: float,
                           bound: float = 2.0) -> CheckReport:
    """Exact l1 distance between keep-probability vectors of two neighbouring point sets.

    ``bound`` is the claimed constant 2; the details also carry the
    slope-based bound from :func:`lipschitz_sensitivity_bound`.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if not 0 <= index < pts.shape[0]:
        raise InvalidParameterError(f"index {index} out of range for n={pts.shape[0]}")
    other = pts.copy()
    other[index] = np.asarray(replacement, dtype=np.float64).reshape(pts.shape[1])
    dist = float(np.abs(selection_vector(pts, tau) - selection_vector(other, tau)).sum())
    slope_bound = lipschitz_sensitivity_bound(pts.shape[0])
    return CheckReport("prob_sensitivity", dist <= bound, dist, bound, 1,
                       details={"n": pts.shape[0], "d": pts.shape[1], "index": index,
                                "slope_bound": slope_bound,
                                "within_slope_bound": dist <= slope_bound + 1e-12})


def _random_neighbours(gen: np.random.Generator, tau: float):
    n = int(gen.integers(3, 51))
    d = int(gen.integers(1, 21))
    # a few clusters whose spread straddles the tau / 2 tau thresholds
    k = int(gen.integers(1, 4))
    centers = gen.normal(scale=3 * tau, size=(k, d))
    labels = gen.integers(0, k, size=n)
    spread = gen.uniform(0.1, 1.5) * tau / math.sqrt(d)
    pts = centers[labels] + gen.normal(scale=spread, size=(n, d))
    if gen.random() < 0.5:
        repl = centers[gen.integers(0, k)] + gen.normal(scale=spread, size=d)
    else:
        repl = gen.normal(scale=100 * tau, size=d)
    return pts, repl, int(gen.integers(0, n))


def prob_sensitivity_audit(trials: int = 1000, seed: int = 0, tau: float = 1.0,
                           bound: float = 2.0) -> CheckReport:
    """Randomised audit of the l1 bound over ``n in 3..50`` and ``d in 1..20``."""
    gen = RngStream(seed, 31).generator
    worst, fails, slope_fails = 0.0, 0, 0
    worst_case = None
    for _ in range(trials):
        pts, repl, idx = _random_neighbours(gen, tau)
        rep = check_prob_sensitivity(pts, repl, idx, tau, bound)
        if rep.statistic > worst:
            worst, worst_case = rep.statistic, (pts.shape[0], pts.shape[1])
        fails += not rep.passed
        slope_fails += not rep.details["within_slope_bound"]
    return CheckReport("prob_sensitivity_audit", fails == 0, worst, bound, trials, seed,
                       details={"failures": fails, "pass_rate": 1 - fails / trials,
                                "worst_n_d": worst_case, "slope_bound_failures": slope_fails})


# ---------------------------------------------------------------------------
# Bernoulli coupling
# ---------------------------------------------------------------------------


def couple_bernoulli(p, p_prime, rng: RngStream, size=None):
    """Draw from the coordinate-wise coupling of ``Ber(p)`` and ``Ber(p_prime)``.

    Per coordinate with ``p_i >= p'_i`` the outcomes are ``(1,1)`` w.p. ``p'_i``,
    ``(1,0)`` w.p. ``p_i - p'_i`` and ``(0,0)`` otherwise (mirrored when
    ``p'_i > p_i``); one shared uniform per coordinate realises exactly this.
    Returns ``(x, y, hamming)`` with a leading ``size`` axis if given.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(p_prime, dtype=np.float64)
    if p.shape != q.shape:
        raise InvalidParameterError("p and p_prime must have the same shape")
    if np.any((p < 0) | (p > 1) | (q < 0) | (q > 1)):
        raise InvalidParameterError("probabilities must lie in [0, 1]")
    if np.abs(p - q).sum() > 2.0 + 1e-12:
        warnings.warn("||p - p'||_1 exceeds 2; the Hamming tail threshold does not apply",
                      stacklevel=2)
    shape = p.shape if size is None else (int(size),) + p.shape
    u = rng.generator.random(shape)
    x = u < p
    y = u < q
    return x, y, np.count_nonzero(x != y, axis=-1)


def coupling_tail_threshold(zeta: float) -> float:
    """Concrete Hamming threshold ``2 + 8 ln(1/zeta)`` for ``||p - p'||_1 <= 2``."""
    return 2.0 + 8.0 * math.log(1.0 / zeta)


def poisson_binomial_pmf(q) -> np.ndarray:
    """Exact pmf of a sum of independent ``Ber(q_i)`` by sequential convolution."""
    pmf = np.array([1.0])
    for qi in np.asarray(q, dtype=np.float64):
        pmf = np.concatenate([pmf * (1 - qi), [0.0]]) + np.concatenate([[0.0], pmf * qi])
    return pmf


def pair_with_l1(p, total: float) -> np.ndarray:
    """A ``p'`` in ``[0,1]^n`` with ``||p - p'||_1 == total`` (needs enough room)."""
    p = np.asarray(p, dtype=np.float64)
    up = 1 - p >= p
    room = np.where(up, 1 - p, p)
    if room.sum() < total:
        raise InvalidParameterError("not enough room for the requested l1 distance")
    step = room * (total / room.sum())
    return np.clip(np.where(up, p + step, p - step), 0.0, 1.0)


def _tabulated_coupling(p, q, gen: np.random.Generator, draws: int) -> np.ndarray:
    """Hamming distances from the coupling table sampled as a categorical per coordinate."""
    hi, lo = np.maximum(p, q), np.minimum(p, q)
    # categories: 0 -> both one, 1 -> exactly one, 2 -> both zero
    cum = np.stack([lo, hi], axis=-1)
    u = gen.random((draws, p.shape[0]))
    cat = (u[..., None] >= cum).sum(axis=-1)
    return np.count_nonzero(cat == 1, axis=1)


def validate_tail_constant(zeta: float = 0.01, instances: int = 200, draws: int = 20000,
                           seed: int = 0) -> CheckReport:
    """Brute-force check of the Hamming threshold before it is relied upon.

    Over random ``(p, p')`` with ``||p - p'||_1`` between 0 and 2, estimates the
    tail by sampling the coupling table directly and also computes it exactly
    from the Poisson-binomial law of the disagreements.
    """
    gen = RngStream(seed, 41).generator
    t = coupling_tail_threshold(zeta)
    worst_mc = worst_exact = 0.0
    for _ in range(instances):
        n = int(gen.integers(2, 200))
        p = gen.random(n)
        total = min(2.0, float(np.where(1 - p >= p, 1 - p, p).sum())) * gen.uniform(0.0, 1.0) ** 0.25
        q = pair_with_l1(p, total)
        ham = _tabulated_coupling(p, q, gen, draws)
        worst_mc = max(worst_mc, float(np.mean(ham > t)))
        pmf = poisson_binomial_pmf(np.abs(p - q))
        worst_exact = max(worst_exact, float(pmf[int(math.floor(t)) + 1:].sum()))
    ok = worst_mc <= zeta and worst_exact <= zeta
    return CheckReport("coupling_tail_constant", ok, max(worst_mc, worst_exact), zeta,
                       instances * draws, seed,
                       details={"threshold": t, "worst_mc_tail": worst_mc,
                                "worst_exact_tail": worst_exact})


def check_coupling_tail(zeta: float = 0.01, draws: int = 100_000, n: int = 50,
                        seed: int = 0) -> CheckReport:
    """Empirical ``Pr[hamming > 2 + 8 ln(1/zeta)]`` at ``||p - p'||_1 = 2``."""
    rng = RngStream(seed, 42)
    p = rng.generator.random(n)
    q = pair_with_l1(p, 2.0)
    x, y, ham = couple_bernoulli(p, q, rng, size=draws)
    tail = float(np.mean(ham > coupling_tail_threshold(zeta)))
    marg_err = np.max(np.abs(x.mean(axis=0) - p) / np.sqrt(p * (1 - p) / draws + 1e-300))
    return CheckReport("coupling_tail", tail <= zeta, tail, zeta, draws, seed,
                       details={"threshold": coupling_tail_threshold(zeta),
                                "l1": float(np.abs(p - q).sum()),
                                "max_hamming": int(ham.max()),
                                "marginal_max_z": float(marg_err)})


# ---------------------------------------------------------------------------
# AboveThreshold and the mean estimator
# ---------------------------------------------------------------------------


def check_above_threshold_utility(T: int = 50, gamma: float = 0.01, epsilon_at: float = 1.0,
                                  trials: int = 1000, seed: int = 0,
                                  threshold: float = 0.0) -> CheckReport:
    """Frequency of the accuracy event for sensitivity-1 queries.

    Each stream descends linearly from ``threshold + 1.5 alpha`` to
    ``threshold - 1.5 alpha`` with small jitter, so halting has to happen
    inside the ``alpha`` band for the event to hold.
    """
    rng = RngStream(seed, 51)
    alpha = utility_alpha(T, gamma, epsilon_at)
    ramp = threshold + alpha * np.linspace(1.5, -1.5, T)
    failures = 0
    for _ in range(trials):
        q = ramp + rng.generator.uniform(-0.1 * alpha, 0.1 * alpha, size=T)
        state = at_init(threshold, epsilon_at, 1.0, rng)
        bad = False
        for t in range(T):
            ans = at_step(state, q[t], rng)
            if ans is Answer.TOP and q[t] < threshold - alpha:
                bad = True
            if ans is Answer.BOTTOM:
                bad |= q[t] > threshold + alpha
                break
        failures += bad
    freq = 1 - failures / trials
    bound = 1 - gamma - 3 * _sigma(gamma, trials)
    return CheckReport("above_threshold_utility", freq >= bound, freq, bound, trials, seed,
                       details={"alpha": alpha, "T": T, "gamma": gamma})


def concentrated_points(gen: np.random.Generator, n: int, d: int, tau: float, gamma: float,
                        center=None) -> tuple[np.ndarray, bool]:
    """Points that are pairwise within ``tau`` with probability ``1 - gamma``.

    The good case draws uniformly from the ball of radius ``tau / 2`` around
    ``center``; the bad case spreads the points ``3 tau`` apart on a line.
    """
    center = gen.normal(size=d) if center is None else np.asarray(center, dtype=np.float64)
    if gen.random() < gamma:
        line = np.outer(np.arange(n) * 3.0 * tau, np.eye(1, d)[0])
        return center + line, False
    g = gen.normal(size=(n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = 0.5 * tau * gen.random(n) ** (1.0 / d)
    return center + g * r[:, None], True


def check_full_selection(n: int, T: int = 4, gamma: float = 0.01, epsilon: float = 1.0,
                         delta: float = 0.1, tau: float = 1.0, d: int = 2, trials: int = 1000,
                         seed: int = 0) -> CheckReport:
    """Fraction of sessions where every one of ``T`` queries keeps all ``n`` users."""
    rng = RngStream(seed, 61)
    gen = rng.generator
    dummy = UserDataset(np.zeros((n, 1, d)))
    budget = PrivacyBudget(epsilon, delta)
    full = 0
    for trial in range(trials):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            session = open_session(dummy, budget, tau, T, rng.child(trial))
        ok = True
        for _ in range(T):
            pts, _ = concentrated_points(gen, n, d, tau, gamma)
            res = session.query(lambda items, pts=pts: pts, batched=True)
            if res.halted or res.selected_count != n:
                ok = False
                break
        full += ok
    frac = full / trials
    bound = 1 - (T + 1) * gamma - 3 * math.sqrt(gamma / trials)
    need = (8 * math.log(T / gamma) + 8 * math.log(T / delta)) / epsilon
    return CheckReport("full_selection", frac >= bound, frac, bound, trials, seed,
                       details={"n": n, "T": T, "gamma": gamma, "n_required": need})


def empirical_noise_audit(n: int = 10, tau: float = 1.0, T: int = 1, epsilon: float = 1.0,
                          delta: float = 0.1, d: int = 1, trials: int = 10_000, seed: int = 0,
                          mode: str = "real", max_sessions: int | None = None) -> CheckReport:
    """Empirical per-coordinate variance of estimates on identical inputs vs the formula.

    All users report the same vector, so every ``TOP`` answer keeps the whole
    dataset; halted sessions are discarded and new ones opened until
    ``trials`` estimates are collected.
    """
    rng = RngStream(seed, 71, NoiseHook(mode))
    true_mean = np.linspace(-1.0, 1.0, d)
    pts = np.broadcast_to(true_mean, (n, d))
    dummy = UserDataset(np.zeros((n, 1, d)))
    budget = PrivacyBudget(epsilon, delta)
    target = 0.0 if mode == "zeroed" else noise_variance(n, tau, T, epsilon, delta)
    max_sessions = max_sessions or 50 * trials
    estimates = []
    sessions = 0
    while len(estimates) < trials and sessions < max_sessions:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            session = open_session(dummy, budget, tau, T, rng.child(sessions))
        sessions += 1
        for _ in range(T):
            res = session.query(lambda items: pts, batched=True)
            if res.halted:
                break
            estimates.append(res.estimate)
            if len(estimates) == trials:
                break
    est = np.asarray(estimates)
    if est.shape[0] < 2:
        return CheckReport("noise_audit", False, float("nan"), target, est.shape[0], seed,
                           details={"sessions": sessions})
    var = float(est.var(axis=0, ddof=1).mean())
    mean_err = np.abs(est.mean(axis=0) - true_mean)
    if target == 0:
        ok = var == 0.0
    else:
        ok = abs(var / target - 1) <= 0.2
    return CheckReport("noise_audit", bool(ok), var, target, est.shape[0], seed,
                       details={"relative_error": (var / target - 1) if target else 0.0,
                                "sessions": sessions,
                                "mean_abs_error": mean_err.tolist(),
                                "mean_tolerance": 4 * math.sqrt(target / est.shape[0])})


# ---------------------------------------------------------------------------
# smoothing and gradients
# ---------------------------------------------------------------------------


def _smoothed_values(loss: LossOracle, theta, z, r: float, k: int, gen):
    """MC smoothed values for a batch of probes; returns (mean, stderr) arrays."""
    d = theta.shape[-1]
    g = gen.standard_normal((theta.shape[0], k, d))
    g /= np.linalg.norm(g, axis=-1, keepdims=True)
    y = r * g * gen.random((theta.shape[0], k, 1)) ** (1.0 / d)
    vals = loss.value(theta[:, None, :] + y, z[:, None, :])
    return vals.mean(axis=1), vals.std(axis=1, ddof=1) / math.sqrt(k)


def check_sandwich(loss: LossOracle, spec: PopulationSpec, r: float, probes: int = 100,
                   k: int = 10_000, seed: int = 0, orientation: str = "jensen") -> CheckReport:
    """Smoothed value vs raw value at random ``(theta, z)``.

    ``orientation="jensen"`` checks ``l <= l_hat <= l + G r``, which holds for
    any convex G-Lipschitz loss. ``orientation="reversed"`` checks
    ``l_hat <= l <= l_hat + G r``, the form in which the property is often
    quoted; for convex losses it fails whenever the smoothing gap is resolvable.
    """
    rng = RngStream(seed, 81)
    gen = rng.generator
    theta = sample_items(spec, probes, rng)
    z = sample_items(spec, probes, rng)
    raw = loss.value(theta, z)
    est, se = _smoothed_values(loss, theta, z, r, k, gen)
    gap = est - raw
    Gr = loss.G * r
    if orientation == "jensen":
        ok = (gap >= -3 * se) & (gap <= Gr + 3 * se)
    elif orientation == "reversed":
        ok = (gap >= -Gr - 3 * se) & (gap <= 3 * se)
    else:
        raise InvalidParameterError(f"unknown orientation {orientation!r}")
    return CheckReport(f"smoothing_sandwich_{orientation}", bool(ok.all()), float(ok.mean()), 1.0,
                       probes, seed,
                       details={"r": r, "Gr": Gr, "min_gap": float(gap.min()),
                                "max_gap": float(gap.max()), "violations": int((~ok).sum())})


def check_gradient_norms(loss: LossOracle, spec: PopulationSpec, r: float, draws: int = 100_000,
                         seed: int = 0) -> CheckReport:
    """Every smoothed stochastic gradient, single-item and user-averaged, has norm <= G."""
    rng = RngStream(seed, 82)
    theta = sample_items(spec, 1, rng)[0]
    z = sample_items(spec, draws, rng).reshape(draws // 10, 10, -1)
    per_user = users_avg_smoothed_grad(loss, theta, z, r, rng)
    single = users_avg_smoothed_grad(loss, theta, z.reshape(draws, 1, -1), r, rng)
    worst = float(max(np.linalg.norm(per_user, axis=1).max(), np.linalg.norm(single, axis=1).max()))
    # norms of normalised vectors can round to 1 + 1ulp
    return CheckReport("smoothing_gradient_norm", worst <= loss.G * (1 + 1e-12), worst, loss.G,
                       draws, seed)


def check_smoothness(loss: LossOracle, spec: PopulationSpec, r: float, probes: int = 1000,
                     k: int = 2000, seed: int = 0) -> CheckReport:
    """Gradient-difference probe against the ``G sqrt(d) / r`` smoothness constant.

    Both MC gradients share perturbations and items, so the error of the
    difference is the standard error of the paired differences.
    """
    rng = RngStream(seed, 83)
    gen = rng.generator
    d = spec.d
    L = smoothness_constant(loss.G, d, r)
    ok = 0
    worst_ratio = 0.0
    batch = 100
    for start in range(0, probes, batch):
        b = min(batch, probes - start)
        th1 = sample_items(spec, b, rng)
        step = gen.standard_normal((b, d))
        step *= (r * gen.random((b, 1))) / np.linalg.norm(step, axis=1, keepdims=True)
        th2 = th1 + step
        z = sample_items(spec, b * k, rng).reshape(b, k, d)
        g = gen.standard_normal((b, k, d))
        g /= np.linalg.norm(g, axis=-1, keepdims=True)
        y = r * g * gen.random((b, k, 1)) ** (1.0 / d)
        diff = loss.subgradient(th1[:, None] + y, z) - loss.subgradient(th2[:, None] + y, z)
        mean = diff.mean(axis=1)
        mc_err = np.sqrt((diff.var(axis=1, ddof=1) / k).sum(axis=1))
        lhs = np.linalg.norm(mean, axis=1)
        rhs = L * np.linalg.norm(step, axis=1) + 3 * mc_err
        ok += int(np.count_nonzero(lhs <= rhs))
        worst_ratio = max(worst_ratio, float(np.max(lhs / np.maximum(L * np.linalg.norm(step, axis=1), 1e-300))))
    frac = ok / probes
    return CheckReport("smoothing_smoothness", frac >= 0.99, frac, 0.99, probes, seed,
                       details={"L": L, "max_raw_ratio": worst_ratio, "mc_draws": k})


def check_smoothing(loss: LossOracle | None = None, spec: PopulationSpec | None = None,
                    r: float = 0.5, probes: int = 100, seed: int = 0,
                    smoothness_probes: int = 1000) -> CheckReport:
    """Sandwich, gradient-norm and smoothness probes, aggregated."""
    if probes < 100:
        raise InvalidParameterError("check_smoothing needs probes >= 100")
    if loss is None:
        loss = NormLoss(BallDomain.centered(5, 3.0))
    if spec is None:
        spec = PopulationSpec(mean=np.zeros(loss.d))
    parts = [
        check_sandwich(loss, spec, r, probes, seed=seed),
        check_gradient_norms(loss, spec, r, seed=seed),
        check_smoothness(loss, spec, r, smoothness_probes, seed=seed),
    ]
    info = check_sandwich(loss, spec, r, probes, seed=seed, orientation="reversed")
    passed = all(p.passed for p in parts)
    return CheckReport("smoothing", passed, float(sum(p.passed for p in parts)), float(len(parts)),
                       probes, seed,
                       details={"checks": [p.to_dict() for p in parts],
                                "reversed_sandwich": info.to_dict()})


def check_gradient_concentration(loss: LossOracle, spec: PopulationSpec, theta, n: int, m: int,
                                 r: float, gamma: float, seed: int = 0, datasets: int = 1000,
                                 population_items: int = 1_000_000) -> CheckReport:
    """Fraction of users whose averaged smoothed gradient leaves the ``G ln(nd/gamma)/sqrt(m)`` ball.

    The population smoothed gradient is estimated from ``population_items``
    fresh items, each with its own perturbation.
    """
    rng = RngStream(seed, 91)
    theta = np.asarray(theta, dtype=np.float64)
    d = theta.shape[0]
    acc = np.zeros(d)
    chunk = 250_000
    done = 0
    while done < population_items:
        b = min(chunk, population_items - done)
        z = sample_items(spec, b, rng)
        acc += users_avg_smoothed_grad(loss, theta, z[:, None, :], r, rng).sum(axis=0)
        done += b
    pop = acc / population_items
    radius = loss.G * math.log(n * d / gamma) / math.sqrt(m)
    viol = 0
    worst = 0.0
    per = max(1, 200_000 // (n * m))
    for start in range(0, datasets, per):
        b = min(per, datasets - start)
        items = sample_items(spec, b * n * m, rng).reshape(b * n, m, d)
        dev = np.linalg.norm(users_avg_smoothed_grad(loss, theta, items, r, rng) - pop, axis=1)
        viol += int(np.count_nonzero(dev > radius))
        worst = max(worst, float(dev.max()))
    users = datasets * n
    frac = viol / users
    bound = gamma / n + 3 * _sigma(gamma / n, users)
    return CheckReport("gradient_concentration", frac <= bound, frac, bound, datasets, seed,
                       details={"radius": radius, "max_deviation": worst,
                                "population_gradient": pop.tolist()})


def finite_diff_check(loss: LossOracle, theta, z, h: float = 1e-6, rtol: float = 1e-4) -> CheckReport:
    """Central differences vs the oracle subgradient; kinks are skipped."""
    theta = np.asarray(theta, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if loss.is_kink(theta, z, h):
        return CheckReport("finite_diff", True, 0.0, rtol, 0, details={"skipped": "kink"})
    eye = np.eye(theta.shape[0]) * h
    fd = (loss.value(theta + eye, z) - loss.value(theta - eye, z)) / (2 * h)
    g = loss.subgradient(theta, z)
    err = float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12))
    return CheckReport("finite_diff", err <= rtol, err, rtol, 1, details={"h": h})


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


def check_schedule(n: int = 10, m: int = 4, d: int = 5, epsilon: float = 1.0, delta: float = 1e-5,
                   G: float = 1.0, R: float = 2.0, t_cap: int = 200_000,
                   loc_n: int = 64, loc_m: int = 4, mu: float = 1.0, C: float = 4.0) -> CheckReport:
    """Exact identities of the DP-SGD schedule and the localization bounds."""
    budget = PrivacyBudget(epsilon, delta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = default_config(n, m, d, budget, G, R, t_cap)
        sched = localization_schedule(loc_n, loc_m, d, budget, G, mu, C, t_cap)
    T_expected = min(t_cap, math.ceil(m * m * n * n + m * n * math.sqrt(d)))
    terms = step_size_terms(R, G, n, m, d, cfg.T, epsilon, delta)
    checks = {
        "T_formula": cfg.T == T_expected,
        "r_sqrtT": math.isclose(cfg.r * math.sqrt(cfg.T), d**0.25 * R, rel_tol=1e-12),
        "eta_min": math.isclose(cfg.eta, R / G * min(terms), rel_tol=1e-12),
        "k": sched.k == max(1, math.ceil(math.log2(math.log2(loc_n * loc_m)))),
        "n_i_doubling": all(sched.n_i[i + 1] >= 2 * sched.n_i[i] for i in range(sched.k - 1)),
        "n_i_total": sum(sched.n_i) <= loc_n,
        "chain": sched.chain_holds(),
        "terminal": sched.terminal_ratio() <= 32,
    }
    passed = all(checks.values())
    return CheckReport("schedule", passed, float(sum(checks.values())), float(len(checks)), 1,
                       details={"checks": checks, "T": cfg.T, "n_i": sched.n_i,
                                "D_k_over_E_k": sched.terminal_ratio()})


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def _suite_sensitivity(trials, seed):
    return [prob_sensitivity_audit(trials or 1000, seed)]


def _suite_coupling(trials, seed):
    return [validate_tail_constant(seed=seed), check_coupling_tail(draws=trials or 100_000, seed=seed)]


def _suite_above_threshold(trials, seed):
    return [check_above_threshold_utility(trials=trials or 1000, seed=seed)]


def _suite_mean(trials, seed):
    return [
        check_full_selection(n=1100, trials=trials or 200, seed=seed),
        empirical_noise_audit(trials=trials or 10_000, seed=seed),
    ]


def _suite_smoothing(trials, seed):
    return [check_smoothing(seed=seed, smoothness_probes=trials or 1000)]


def _suite_concentration(trials, seed):
    spec = PopulationSpec(mean=np.zeros(5))
    loss = NormLoss(BallDomain.centered(5, 1.0))
    return [check_gradient_concentration(loss, spec, np.full(5, 0.1), n=20, m=16, r=0.1,
                                         gamma=0.05, seed=seed, datasets=trials or 1000)]


def _suite_finite_diff(trials, seed):
    gen = RngStream(seed, 99).generator
    loss = NormLoss(BallDomain.centered(4, 1.0))
    reports = [finite_diff_check(loss, gen.normal(size=4), gen.normal(size=4))
               for _ in range(trials or 20)]
    worst = max(r.statistic for r in reports)
    return [CheckReport("finite_diff_batch", all(r.passed for r in reports), worst, 1e-4,
                        len(reports), seed)]


def _suite_schedule(trials, seed):
    return [check_schedule()]


SUITES = {
    "sensitivity": _suite_sensitivity,
    "coupling": _suite_coupling,
    "above_threshold": _suite_above_threshold,
    "mean": _suite_mean,
    "smoothing": _suite_smoothing,
    "concentration": _suite_concentration,
    "finite_diff": _suite_finite_diff,
    "schedule": _suite_schedule,
}


def run_suite(suite: str, trials: int | None = None, seed: int = 0) -> list[CheckReport]:
    if suite == "all":
        return [rep for name in SUITES for rep in SUITES[name](trials, seed)]
    if suite not in SUITES:
        raise InvalidParameterError(f"unknown suite {suite!r}; choose from {sorted(SUITES) + ['all']}")
    return SUITES[suite](trials, seed)
