import math

import numpy as np
import pytest

from midesign.errors import DegenerateWeightsError, InputError
from midesign.nn import Network, NetworkConfig, init_network
from midesign.posterior import (
    build_posterior,
    posterior_density,
    posterior_sample,
    summarize,
)

from helpers import random_net


def constant_critic(theta_dim, y_dim, value):
    cfg = NetworkConfig(theta_dim, y_dim, (4,))
    net = init_network(cfg)
    net.weights = [np.zeros_like(w) for w in net.weights]
    net.biases = [np.zeros_like(b) for b in net.biases]
    net.biases[-1][:] = value
    return net


def scripted_critic(scores_by_row):
    """Critic that returns a fixed score per prior-sample row: theta is the
    row index, the first layer picks it out, the output layer maps index to
    score via a lookup weight trick is overkill — instead use a one-hot
    input with a linear read-out."""
    k = len(scores_by_row)
    cfg = NetworkConfig(k, 1, (k,))
    w1 = np.zeros((k + 1, k))
    w1[:k, :k] = np.eye(k)
    b1 = np.zeros(k)
    w2 = np.asarray(scores_by_row, dtype=float)[:, None]
    net = Network([w1, w2], [b1, np.zeros(1)], cfg)
    return net, np.eye(k)  # prior samples are the one-hot rows


# ---------------------------------------------------------------------------
# density


def test_constant_unit_critic_posterior_equals_prior():
    net = constant_critic(1, 1, 1.0)

    def prior(theta):
        theta = np.atleast_2d(theta)
        return np.exp(-0.5 * theta[:, 0] ** 2) / math.sqrt(2 * math.pi)

    thetas = np.linspace(-3, 3, 33)[:, None]
    dens = posterior_density(net, thetas, np.array([0.7]), prior)
    np.testing.assert_array_equal(dens, prior(thetas))  # exp(1-1) == 1 exactly


def test_density_nonnegative_everywhere():
    rng = np.random.default_rng(0)
    net = random_net(rng, theta_dim=2, y_dim=1, scale=0.5)

    def prior(theta):
        theta = np.atleast_2d(theta)
        return np.exp(-0.5 * np.sum(theta**2, axis=1)) / (2 * math.pi)

    thetas = rng.standard_normal((10_000, 2)) * 3
    y_star = rng.standard_normal(1)
    dens = posterior_density(net, thetas, y_star, prior)
    assert np.all(dens >= 0.0)


def test_density_scalar_input():
    net = constant_critic(1, 1, 1.0)
    val = posterior_density(net, np.array([0.3]), np.array([0.0]), lambda t: np.atleast_2d(t)[:, 0] * 0 + 0.25)
    assert val == 0.25


# ---------------------------------------------------------------------------
# weights and resampling


def test_normalized_weights_sum_to_one():
    rng = np.random.default_rng(1)
    net = random_net(rng, theta_dim=2, y_dim=1, scale=0.5)
    est = build_posterior(net, rng.standard_normal((5000, 2)), rng.standard_normal(1))
    assert abs(est.weights.sum() - 1.0) < 1e-12
    assert np.all(est.weights >= 0.0)


def test_unnormalized_weights_use_raw_relation():
    net = constant_critic(1, 1, 1.0)
    est = build_posterior(net, np.zeros((10, 1)), np.array([0.0]))
    np.testing.assert_allclose(est.weights_unnormalized, np.ones(10))  # exp(1-1)
    assert est.ess == pytest.approx(10.0)


def test_uniform_weights_select_uniformly():
    k, n = 50, 100_000
    net = constant_critic(2, 1, 1.0)
    prior = np.column_stack([np.arange(k, dtype=float), np.zeros(k)])
    samples = posterior_sample(net, prior, np.array([0.0]), n, np.random.default_rng(2))
    counts = np.bincount(samples[:, 0].astype(int), minlength=k)
    sigma = math.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(counts - n / k) <= 3.5 * sigma)


def test_dominant_weight_dominates_selection():
    scores = [0.0] * 9 + [30.0]
    net, prior = scripted_critic(scores)
    samples = posterior_sample(net, prior, np.array([0.0]), 20_000, np.random.default_rng(3))
    frac = np.mean(samples[:, -1] == 1.0)
    assert frac > 0.999


def test_resampled_rows_are_prior_rows():
    rng = np.random.default_rng(4)
    net = random_net(rng, theta_dim=2, y_dim=1, scale=0.3)
    prior = rng.standard_normal((200, 2))
    samples = posterior_sample(net, prior, rng.standard_normal(1), 500, rng)
    prior_set = {tuple(row) for row in prior}
    assert all(tuple(row) in prior_set for row in samples)


def test_resampling_deterministic_given_seed():
    rng = np.random.default_rng(5)
    net = random_net(rng, theta_dim=1, y_dim=1, scale=0.3)
    prior = rng.standard_normal((100, 1))
    y = rng.standard_normal(1)
    s1 = posterior_sample(net, prior, y, 50, np.random.default_rng(9))
    s2 = posterior_sample(net, prior, y, 50, np.random.default_rng(9))
    np.testing.assert_array_equal(s1, s2)


def test_degenerate_weights_raise():
    net = constant_critic(1, 1, 1.0)
    net.weights[0][0, 0] = np.nan
    with pytest.raises(DegenerateWeightsError):
        posterior_sample(net, np.ones((5, 1)), np.array([np.nan]), 10, np.random.default_rng(0))


def test_ess_flags_degenerate_weight_sets():
    net, prior = scripted_critic([0.0] * 199 + [30.0])
    est = build_posterior(net, prior, np.array([0.0]))
    assert est.ess == pytest.approx(1.0, abs=1e-6)
    assert est.degenerate  # ESS below 1% of 200 prior rows


# ---------------------------------------------------------------------------
# summaries


def test_summarize_constant_samples():
    stats = summarize(np.full((50, 2), 3.0))
    np.testing.assert_array_equal(stats.mean, [3.0, 3.0])
    np.testing.assert_array_equal(stats.std, [0.0, 0.0])
    np.testing.assert_array_equal(stats.q16, [3.0, 3.0])
    np.testing.assert_array_equal(stats.q84, [3.0, 3.0])


def test_summarize_standard_normal_interval():
    rng = np.random.default_rng(6)
    stats = summarize(rng.standard_normal((1_000_000, 1)))
    assert stats.q16[0] == pytest.approx(-0.9945, abs=0.02)
    assert stats.q84[0] == pytest.approx(0.9945, abs=0.02)


def test_summarize_needs_two_rows():
    with pytest.raises(InputError):
        summarize(np.ones((1, 3)))
