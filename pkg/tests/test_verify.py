import json
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from userdp.core import InvalidParameterError, RngStream
from userdp.losses import BallDomain, NormLoss, PopulationSpec
from userdp.verify import (
    CheckReport,
    check_coupling_tail,
    check_gradient_concentration,
    check_prob_sensitivity,
    check_schedule,
    check_smoothing,
    concentrated_points,
    couple_bernoulli,
    coupling_tail_threshold,
    lipschitz_sensitivity_bound,
    pair_with_l1,
    poisson_binomial_pmf,
    prob_sensitivity_audit,
    run_suite,
    validate_tail_constant,
)


def l1_oracle(points, repl, idx, tau):
    """Exact rational l1 distance by explicit loops."""
    def probs(pts):
        n = len(pts)
        out = []
        for a in pts:
            f = sum(math.dist(a, b) <= 2 * tau for b in pts)
            if Fraction(f) < Fraction(n, 2):
                out.append(Fraction(0))
            elif Fraction(f) >= Fraction(2 * n, 3):
                out.append(Fraction(1))
            else:
                out.append((f - Fraction(n, 2)) / Fraction(n, 6))
        return out

    other = list(points)
    other[idx] = repl
    return sum(abs(a - b) for a, b in zip(probs(points), probs(other)))


# sensitivity ----------------------------------------------------------------------


def test_identical_replacement_is_zero():
    pts = np.random.default_rng(0).normal(size=(12, 3))
    rep = check_prob_sensitivity(pts, pts[4], 4, 1.0)
    assert rep.statistic == 0.0 and rep.passed


def test_far_replacement_of_tight_cluster():
    pts = np.random.default_rng(1).normal(scale=0.05, size=(15, 2))
    repl = pts[0] + np.array([100.0, 0.0])
    rep = check_prob_sensitivity(pts, repl, 0, 1.0)
    expected = l1_oracle([tuple(p) for p in pts], tuple(repl), 0, 1.0)
    assert expected == 1
    assert rep.statistic == pytest.approx(float(expected)) and rep.passed


def test_counterexample_to_constant_two():
    # one swap moves the neighbour counts of several users whose keep
    # probability sits on the linear ramp of slope 6/n
    pts = [(6.0,), (5.0,), (2.0,), (0.0,), (4.0,), (5.0,), (2.0,), (2.0,)]
    expected = l1_oracle(pts, (5.0,), 3, 1.0)
    assert expected == Fraction(21, 4)
    rep = check_prob_sensitivity(np.array(pts), [5.0], 3, 1.0)
    assert rep.statistic == pytest.approx(5.25, abs=1e-12)
    assert not rep.passed
    assert rep.details["within_slope_bound"]


@pytest.mark.parametrize("seed", range(5))
def test_matches_rational_oracle(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(3, 15))
    pts = np.round(gen.normal(scale=1.5, size=(n, 2)), 1)
    repl = np.round(gen.normal(scale=1.5, size=2), 1)
    idx = int(gen.integers(0, n))
    want = l1_oracle([tuple(p) for p in pts], tuple(repl), idx, 1.0)
    assert check_prob_sensitivity(pts, repl, idx, 1.0).statistic == pytest.approx(float(want), abs=1e-12)


def test_slope_bound_formula():
    assert lipschitz_sensitivity_bound(3) == 3.0
    assert lipschitz_sensitivity_bound(12) == pytest.approx(1 + 11 * 0.5)


def test_audit_never_exceeds_slope_bound():
    rep = prob_sensitivity_audit(trials=300, seed=5)
    assert rep.details["slope_bound_failures"] == 0
    assert rep.trials == 300


def test_audit_replayable():
    a = prob_sensitivity_audit(trials=100, seed=9)
    b = prob_sensitivity_audit(trials=100, seed=9)
    assert a.to_dict() == b.to_dict()


def test_bad_index():
    with pytest.raises(InvalidParameterError):
        check_prob_sensitivity(np.zeros((3, 1)), [0.0], 3, 1.0)


# coupling ----------------------------------------------------------------------------


def test_identical_marginals_never_disagree():
    p = np.random.default_rng(0).random(30)
    _, _, ham = couple_bernoulli(p, p, RngStream(0), size=1000)
    assert np.all(ham == 0)


def test_coupling_marginals_and_joint_table():
    gen = np.random.default_rng(1)
    p = gen.random(20)
    q = pair_with_l1(p, 2.0)
    draws = 100_000
    # 60 simultaneous comparisons, so 4 sigma per coordinate keeps the
    # family-wise false-alarm rate near 0.4%
    x, y, _ = couple_bernoulli(p, q, RngStream(1), size=draws)
    for emp, target in ((x.mean(axis=0), p), (y.mean(axis=0), q)):
        se = np.sqrt(target * (1 - target) / draws)
        assert np.all(np.abs(emp - target) <= 4 * se + 1e-12)
    hi, lo = np.maximum(p, q), np.minimum(p, q)
    both = (x & y).mean(axis=0)
    assert np.all(np.abs(both - lo) <= 4 * np.sqrt(lo * (1 - lo) / draws) + 1e-12)
    differ = (x != y).mean(axis=0)
    assert np.all(np.abs(differ - (hi - lo)) <= 4 * np.sqrt((hi - lo) * (1 - hi + lo) / draws) + 1e-12)


def test_coupling_rejects_bad_probabilities():
    with pytest.raises(InvalidParameterError):
        couple_bernoulli(np.array([1.2]), np.array([0.5]), RngStream(0))
    with pytest.raises(InvalidParameterError):
        couple_bernoulli(np.array([0.2, 0.3]), np.array([0.5]), RngStream(0))


def test_coupling_warns_beyond_two():
    with pytest.warns(UserWarning):
        couple_bernoulli(np.ones(4), np.zeros(4), RngStream(0))


def test_pair_with_l1():
    p = np.random.default_rng(2).random(50)
    q = pair_with_l1(p, 2.0)
    assert np.abs(p - q).sum() == pytest.approx(2.0)
    assert np.all((q >= 0) & (q <= 1))


def test_poisson_binomial_matches_binomial():
    pmf = poisson_binomial_pmf(np.full(12, 0.3))
    np.testing.assert_allclose(pmf, stats.binom(12, 0.3).pmf(np.arange(13)), rtol=1e-12, atol=1e-15)


def test_tail_threshold_value():
    assert coupling_tail_threshold(0.01) == pytest.approx(2 + 8 * math.log(100))


def test_tail_constant_validated():
    rep = validate_tail_constant(zeta=0.01, instances=50, draws=5000, seed=3)
    assert rep.passed
    # the constant is loose: even zeta = 0.5 leaves a tiny exact tail
    loose = validate_tail_constant(zeta=0.5, instances=50, draws=5000, seed=3)
    assert loose.details["worst_exact_tail"] < 0.01


def test_coupling_tail():
    rep = check_coupling_tail(zeta=0.01, draws=20_000, seed=4)
    assert rep.passed and rep.details["l1"] == pytest.approx(2.0)


# other checks ------------------------------------------------------------------------------


def test_concentrated_points_good_case_pairwise_within_tau():
    gen = np.random.default_rng(5)
    for _ in range(50):
        pts, good = concentrated_points(gen, 30, 4, 1.0, gamma=0.0)
        assert good
        diffs = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        assert diffs.max() <= 1.0


def test_concentration_atom_has_zero_deviation():
    spec = PopulationSpec(mean=np.array([0.5, 0.5]), kind="atom")
    loss = NormLoss(BallDomain.centered(2, 1.0))
    rep = check_gradient_concentration(loss, spec, np.zeros(2), n=5, m=4, r=0.0, gamma=0.1,
                                       datasets=20, population_items=10_000)
    # the population mean of identical gradients differs only by rounding
    assert rep.details["max_deviation"] < 1e-12 and rep.statistic == 0.0


def test_concentration_large_m():
    spec = PopulationSpec(mean=np.zeros(3))
    loss = NormLoss(BallDomain.centered(3, 1.0))
    rep = check_gradient_concentration(loss, spec, np.full(3, 0.1), n=5, m=10_000, r=0.1, gamma=0.01,
                                       datasets=10, population_items=200_000)
    assert rep.statistic == 0.0 and rep.passed


def test_schedule_check():
    rep = check_schedule()
    assert rep.passed, rep.details


def test_smoothing_needs_probes():
    with pytest.raises(InvalidParameterError):
        check_smoothing(probes=10)


def test_report_serialises():
    rep = CheckReport("x", True, np.float64(1.5), 2.0, 3, 7, details={"a": np.arange(2)})
    back = json.loads(rep.to_json())
    assert back["statistic"] == 1.5 and back["details"]["a"] == [0, 1] and back["passed"] is True
    assert "PASS" in rep.line()


def test_unknown_suite():
    with pytest.raises(InvalidParameterError):
        run_suite("nope")


def test_suite_replay():
    a = run_suite("above_threshold", trials=200, seed=1)[0]
    b = run_suite("above_threshold", trials=200, seed=1)[0]
    assert a.statistic == b.statistic
