import math

import numpy as np
import pytest

from userdp.core import InvalidParameterError, NoiseHook, RngStream
from userdp.losses import BallDomain, LinearLoss, NormLoss, PopulationSpec, QuadraticLoss
from userdp.smoothing import (
    SmoothingParams,
    smoothed_grad_item,
    smoothed_value_mc,
    smoothness_constant,
    user_avg_smoothed_grad,
    users_avg_smoothed_grad,
)
from userdp.verify import check_gradient_norms, check_sandwich, check_smoothness


@pytest.fixture
def norm2():
    return NormLoss(BallDomain.centered(2, 5.0))


def test_params_validation():
    with pytest.raises(InvalidParameterError):
        SmoothingParams(r=0.0)
    with pytest.raises(InvalidParameterError):
        SmoothingParams(r=1.0, mc_samples=0)


def test_smoothness_constant():
    assert smoothness_constant(2.0, 9, 0.5) == 12.0


def test_zeroed_hook_gives_raw_subgradient(norm2):
    rng = RngStream(0, 0, NoiseHook("zeroed"))
    theta, z = np.array([1.0, 2.0]), np.array([-1.0, 0.5])
    np.testing.assert_array_equal(smoothed_grad_item(norm2, theta, z, 0.3, rng), norm2.subgradient(theta, z))


def test_zero_radius_is_raw(norm2):
    theta, z = np.array([1.0, 2.0]), np.array([-1.0, 0.5])
    np.testing.assert_array_equal(smoothed_grad_item(norm2, theta, z, 0.0, RngStream(0)),
                                  norm2.subgradient(theta, z))
    assert smoothed_value_mc(norm2, theta, z, 0.0, 10, RngStream(0)).value == norm2.value(theta, z)


def test_far_from_kink_matches_gradient(norm2):
    theta, z = np.array([3.0, 1.0]), np.array([-1.0, 0.0])
    rng = RngStream(1, 0)
    g = np.mean([smoothed_grad_item(norm2, theta, z, 0.1, rng) for _ in range(2000)], axis=0)
    many = users_avg_smoothed_grad(norm2, theta, np.broadcast_to(z, (1, 100_000, 2)), 0.1, rng)[0]
    exact = (theta - z) / np.linalg.norm(theta - z)
    assert np.linalg.norm(many - exact) <= 0.02 * np.linalg.norm(exact)
    assert np.linalg.norm(g - exact) <= 0.02 * np.linalg.norm(exact)


def test_single_item_user_matches_item(norm2):
    theta, z = np.array([0.2, 0.1]), np.array([0.0, 0.3])
    a = smoothed_grad_item(norm2, theta, z, 0.5, RngStream(2, 0))
    b = user_avg_smoothed_grad(norm2, theta, z[None], 0.5, RngStream(2, 0))
    np.testing.assert_array_equal(a, b)


def test_batched_users_zeroed_is_mean_subgradient(norm2):
    items = np.random.default_rng(0).normal(size=(4, 6, 2))
    theta = np.array([0.5, -0.5])
    out = users_avg_smoothed_grad(norm2, theta, items, 0.2, RngStream(3, 0, NoiseHook("zeroed")))
    np.testing.assert_allclose(out, norm2.subgradient(theta, items).mean(axis=1))
    assert out.shape == (4, 2)


def test_gradient_norms_bounded():
    rep = check_gradient_norms(NormLoss(BallDomain.centered(5, 3.0)), PopulationSpec(mean=np.zeros(5)),
                               0.5, draws=20_000, seed=1)
    assert rep.passed
    quad = QuadraticLoss(BallDomain.centered(3, 1.0), mu=1.0, z_bound=2.0, slack=1.0)
    items = np.random.default_rng(1).normal(size=(200, 8, 3))
    items *= np.minimum(1.0, 2.0 / np.linalg.norm(items, axis=-1, keepdims=True))
    g = users_avg_smoothed_grad(quad, np.array([0.0, 1.0, 0.0]), items, 1.0, RngStream(4, 0))
    assert np.all(np.linalg.norm(g, axis=1) <= quad.G)


def test_extended_domain_checked():
    quad = QuadraticLoss(BallDomain.centered(2, 1.0), mu=1.0, z_bound=1.0, slack=0.1)
    with pytest.raises(InvalidParameterError):
        smoothed_grad_item(quad, np.array([1.0, 0.0]), np.zeros(2), 0.5, RngStream(0))


def test_linear_loss_unchanged_by_smoothing():
    loss = LinearLoss(BallDomain.centered(3), np.array([1.0, -2.0, 0.5]))
    theta, z = np.array([0.3, 0.1, -0.4]), np.zeros(3)
    est = smoothed_value_mc(loss, theta, z, 0.8, 10_000, RngStream(5, 0))
    assert abs(est.value - loss.value(theta, z)) <= 3 * est.stderr


def test_mc_needs_two_draws(norm2):
    with pytest.raises(InvalidParameterError):
        smoothed_value_mc(norm2, np.zeros(2), np.ones(2), 0.5, 1, RngStream(0))


def test_sandwich_jensen_orientation():
    # convex loss: raw <= smoothed <= raw + G r
    rep = check_sandwich(NormLoss(BallDomain.centered(5, 3.0)), PopulationSpec(mean=np.zeros(5)),
                         0.5, probes=100, k=10_000, seed=2)
    assert rep.passed, rep.details


def test_sandwich_reversed_orientation_is_violated():
    # smoothed <= raw fails for a convex loss whenever the gap is resolvable;
    # near the kink the smoothing gap is about r d / (d + 1)
    loss = NormLoss(BallDomain.centered(5, 3.0))
    theta = np.zeros(5)
    est = smoothed_value_mc(loss, theta, theta, 0.5, 10_000, RngStream(6, 0))
    assert est.value - 3 * est.stderr > loss.value(theta, theta)
    assert est.value == pytest.approx(0.5 * 5 / 6, rel=0.01)


def test_gradient_is_derivative_of_smoothed_value(norm2):
    # finite differences of the MC value with common perturbations vs. an
    # independent MC average of smoothed gradients
    theta, z, r, k, h = np.array([0.3, -0.2]), np.array([0.1, 0.0]), 0.6, 200_000, 1e-4
    ys = RngStream(7, 0).generator.normal(size=(k, 2))
    ys *= (r * RngStream(7, 1).generator.random((k, 1)) ** 0.5) / np.linalg.norm(ys, axis=1, keepdims=True)
    fd = np.array([
        np.mean(norm2.value(theta + e + ys, z) - norm2.value(theta - e + ys, z)) / (2 * h)
        for e in np.eye(2) * h
    ])
    items = np.broadcast_to(z, (1, k, 2))
    g = users_avg_smoothed_grad(norm2, theta, items, r, RngStream(8, 1))[0]
    se = 1.0 / math.sqrt(k)  # per-coordinate sd of a unit-norm vector is at most 1
    assert np.all(np.abs(g - fd) <= 3 * math.sqrt(2) * se)


def test_smoothness_probe():
    rep = check_smoothness(NormLoss(BallDomain.centered(3, 3.0)), PopulationSpec(mean=np.zeros(3)),
                           0.5, probes=200, k=1000, seed=3)
    assert rep.passed, rep.details
