"""Shared oracles: finite differences and small random nets."""

import numpy as np

from midesign.nn import Network, NetworkConfig, init_network


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.max(np.abs(a - b) / denom)


def norm_rel_err(a, b, floor=1e-12):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), floor)


def central_diff(f, x0, h):
    """Central finite differences of a scalar function over a flat vector."""
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.empty_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def random_net(rng, theta_dim=None, y_dim=None, hidden=None, scale=1.0):
    """Small random critic with non-trivial biases (init_network zeroes them)."""
    theta_dim = theta_dim or int(rng.integers(1, 4))
    y_dim = y_dim or int(rng.integers(1, 4))
    if hidden is None:
        hidden = tuple(int(rng.integers(2, 7)) for _ in range(int(rng.integers(1, 3))))
    cfg = NetworkConfig(theta_dim, y_dim, hidden, seed=int(rng.integers(0, 2**31)))
    net = init_network(cfg)
    weights = [scale * rng.standard_normal(w.shape) for w in net.weights]
    biases = [0.3 * rng.standard_normal(b.shape) for b in net.biases]
    return Network(weights, biases, cfg)


def preactivation_margin(net, x):
    """Smallest |pre-activation| over hidden units; finite differences are
    invalid within a kink's neighbourhood."""
    margin = np.inf
    h = np.atleast_2d(x)
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = h @ w + b
        margin = min(margin, float(np.min(np.abs(z))))
        h = np.maximum(z, 0.0)
    return margin


def activation_pattern(net, x):
    """Boolean rectifier-on masks per hidden layer for a batch of inputs."""
    masks = []
    h = np.atleast_2d(x)
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = h @ w + b
        masks.append(z > 0.0)
        h = np.maximum(z, 0.0)
    return masks


def same_pattern(net, xa, xb):
    return all(np.array_equal(a, b) for a, b in zip(activation_pattern(net, xa), activation_pattern(net, xb)))


def trend_non_decreasing(raw_trace, quartile=0.25, n_sigma=3.0):
    """Final-quartile trend test: the second half of the final quartile must
    not sit more than n_sigma combined standard errors below the first half."""
    raw = np.asarray(raw_trace, dtype=np.float64)
    tail = raw[int((1.0 - quartile) * raw.size):]
    half = tail.size // 2
    a, b = tail[:half], tail[half:]
    se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    return b.mean() >= a.mean() - n_sigma * se
