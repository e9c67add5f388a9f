"""Amortized posterior recovery from a trained critic.

A tight critic satisfies p(theta | y, d) = exp(T(theta, y) - 1) * p(theta),
so the posterior density comes for free after training, and posterior
samples are obtained by categorically re-weighting prior draws with weights
proportional to exp(T(theta_i, y)). The prior factor cancels in that
resampling (the draws already come from the prior), so weights use exp(T)
only; the density evaluator keeps the explicit prior factor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError, InputError
from .nn import Network, forward

logger = logging.getLogger(__name__)

ESS_DEGENERACY_FRACTION = 0.01


@dataclass
class PosteriorEstimate:
    """Weighted prior-sample representation of the posterior at observed data.

    ``weights_unnormalized`` are exp(T - 1) as the density relation writes
    them (their mean approximates 1 when the bound is tight);
    ``weights`` are normalized for resampling. ``ess`` is 1 / sum(w_bar^2).
    """

    network: Network
    y_star: np.ndarray
    prior_samples: np.ndarray
    scores: np.ndarray
    weights_unnormalized: np.ndarray
    weights: np.ndarray
    ess: float

    @property
    def degenerate(self) -> bool:
        return self.ess < ESS_DEGENERACY_FRACTION * self.prior_samples.shape[0]


def _scores_at(net: Network, theta: np.ndarray, y_star: np.ndarray) -> np.ndarray:
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    y = np.broadcast_to(np.asarray(y_star, dtype=np.float64), (theta.shape[0], len(y_star)))
    return forward(net, theta, y)


def _normalized_weights(scores: np.ndarray) -> np.ndarray:
    finite = np.isfinite(scores)
    if not np.any(finite):
        raise DegenerateWeightsError("all critic scores are non-finite")
    shifted = np.where(finite, scores - scores[finite].max(), -np.inf)
    w = np.exp(shifted)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateWeightsError(
            f"degenerate posterior weights: sum={total!r}, "
            f"score range [{np.nanmin(scores)!r}, {np.nanmax(scores)!r}]"
        )
    return w / total


def build_posterior(net: Network, prior_samples, y_star) -> PosteriorEstimate:
    """Score prior draws against observed data and package the weight set."""
    prior_samples = np.atleast_2d(np.asarray(prior_samples, dtype=np.float64))
    y_star = np.asarray(y_star, dtype=np.float64).ravel()
    scores = _scores_at(net, prior_samples, y_star)
    weights = _normalized_weights(scores)
    ess = float(1.0 / np.sum(weights**2))
    est = PosteriorEstimate(
        network=net,
        y_star=y_star,
        prior_samples=prior_samples,
        scores=scores,
        weights_unnormalized=np.exp(scores - 1.0),
        weights=weights,
        ess=ess,
    )
    if est.degenerate:
        logger.warning(
            "posterior weights are degenerate: ESS %.1f of %d prior samples",
            ess,
            prior_samples.shape[0],
        )
    return est


def posterior_density(net: Network, theta, y_star, prior_density) -> np.ndarray:
    """Pointwise posterior density exp(T(theta, y*) - 1) * prior(theta).

    ``prior_density`` maps theta (batched) to prior density values. The raw
    (non-self-normalized) form is returned; it integrates to ~1 only insofar
    as the trained bound is tight.
    """
    theta_arr = np.asarray(theta, dtype=np.float64)
    single = theta_arr.ndim == 1
    y_star = np.asarray(y_star, dtype=np.float64).ravel()
    scores = _scores_at(net, theta_arr, y_star)
    dens = np.exp(scores - 1.0) * np.asarray(prior_density(theta_arr), dtype=np.float64)
    return float(dens[0]) if single else dens


def posterior_sample(
    net: Network,
    prior_samples,
    y_star,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw n rows from the prior-sample set with probability prop. to exp(T)."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    est = build_posterior(net, prior_samples, y_star)
    idx = rng.choice(est.prior_samples.shape[0], size=n, replace=True, p=est.weights)
    return est.prior_samples[idx]


@dataclass(frozen=True)
class SummaryStats:
    """Per-dimension mean, sample std, and central 68% interval [q16, q84]."""

    mean: np.ndarray
    std: np.ndarray
    q16: np.ndarray
    q84: np.ndarray


def summarize(samples) -> SummaryStats:
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] < 2:
        raise InputError("summarize requires at least 2 sample rows")
    lo, hi = np.percentile(samples, [16.0, 84.0], axis=0)
    return SummaryStats(
        mean=samples.mean(axis=0),
        std=samples.std(axis=0, ddof=1),
        q16=lo,
        q84=hi,
    )
