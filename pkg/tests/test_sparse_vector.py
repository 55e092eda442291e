import math

import numpy as np
import pytest

from userdp.core import InvalidParameterError, NoiseHook, RngStream, UsageError
from userdp.sparse_vector import Answer, at_init, at_step, utility_alpha
from userdp.verify import check_above_threshold_utility


def test_zeroed_threshold_is_exact(zeroed_rng):
    assert at_init(8.0, 1.0, 1.0, zeroed_rng).noisy_threshold == 8.0


def test_zeroed_step_is_exact_comparator(zeroed_rng):
    state = at_init(8.0, 1.0, 1.0, zeroed_rng)
    assert at_step(state, 10.0, zeroed_rng) is Answer.TOP
    assert at_step(state, 8.0, zeroed_rng) is Answer.TOP  # ties answer TOP
    assert not state.halted
    assert at_step(state, 7.9, zeroed_rng) is Answer.BOTTOM
    assert state.halted


def test_step_after_halt_is_rejected(zeroed_rng):
    state = at_init(8.0, 1.0, 1.0, zeroed_rng)
    at_step(state, 0.0, zeroed_rng)
    with pytest.raises(UsageError):
        at_step(state, 100.0, zeroed_rng)


@pytest.mark.parametrize("eps,s", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
def test_invalid_parameters(rng, eps, s):
    with pytest.raises(InvalidParameterError):
        at_init(0.0, eps, s, rng)


def test_sensitivity_scales_threshold_noise():
    hook = NoiseHook(record=True)
    one = at_init(8.0, 1.0, 1.0, RngStream(5, 0, hook))
    two = at_init(8.0, 1.0, 2.0, RngStream(5, 0, hook.replay()))
    assert math.isclose(two.noisy_threshold - 8.0, 2 * (one.noisy_threshold - 8.0), rel_tol=1e-12)


def test_noise_scales():
    state = at_init(0.0, 0.5, 2.0, RngStream(0, 0, NoiseHook("zeroed")))
    assert state.threshold_noise_scale == 8.0
    assert state.query_noise_scale == 16.0


def test_threshold_tail_frequency():
    # Pr[|Lap(2)| > 2 ln 100] = 1/100
    rng = RngStream(8, 0)
    vals = np.array([at_init(0.0, 1.0, 1.0, rng).noisy_threshold for _ in range(100_000)])
    assert abs(np.mean(np.abs(vals) > 2 * math.log(100)) - 0.01) < 0.003


def test_query_noise_scale_empirical():
    # the TOP probability at q = threshold with a zero threshold draw is 1/2,
    # and at q - threshold = b ln 2 it is 3/4 (b = 4/eps)
    rng = RngStream(9, 0)
    tops = 0
    trials = 20_000
    for _ in range(trials):
        state = at_init(0.0, 1.0, 1.0, rng)
        state.noisy_threshold = 0.0
        tops += at_step(state, 4 * math.log(2), rng) is Answer.TOP
    assert abs(tops / trials - 0.75) < 4 * math.sqrt(0.75 * 0.25 / trials)


def test_alpha_formula():
    assert math.isclose(utility_alpha(50, 0.01, 1.0), 8 * math.log(10_000))
    assert math.isclose(utility_alpha(50, 0.01, 1.0, sensitivity=2.0), 16 * math.log(10_000))


def test_utility_guarantee():
    rep = check_above_threshold_utility(T=50, gamma=0.01, epsilon_at=1.0, trials=1000, seed=3)
    assert rep.passed, rep.line()


def test_all_above_stream_answers_top():
    T, gamma = 50, 0.01
    alpha = utility_alpha(T, gamma, 1.0)
    rng = RngStream(4, 0)
    ok = 0
    for _ in range(1000):
        state = at_init(0.0, 1.0, 1.0, rng)
        ok += all(at_step(state, 10 * alpha, rng) is Answer.TOP for _ in range(T))
    assert ok >= 990


def test_single_bottom_per_instance():
    rng = RngStream(6, 0)
    state = at_init(0.0, 1.0, 1.0, rng)
    answers = []
    for q in np.linspace(50, -200, 500):
        if state.halted:
            break
        answers.append(at_step(state, q, rng))
    assert answers.count(Answer.BOTTOM) == 1
    assert answers[-1] is Answer.BOTTOM
