"""Sample-average mutual-information lower bound and its gradients.

The bound for a critic T and design d is

    I_hat(d) = E_joint[T(theta, y)] - e^{-1} * E_marg[exp(T(theta, y'))],

estimated on a batch of N prior draws theta with paired data y generated at
d, and an independent block theta' with data y' generated at d. The marginal
expectation pairs theta_i with y'_i (theta and theta' are independent prior
draws, so (theta_i, y'_i) is a draw from the product of marginals).

Because each y row is a deterministic function of its stored noise draw, the
bound is differentiable in d: the design gradient chains the critic's input
gradient with the sampling-path Jacobian, per row, and averages. Both terms
are exact derivatives of the sample-average bound at frozen noise, which is
what the finite-difference oracles in the test-suite verify.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, InputError, NumericalError
from .models import NoiseDraw, SimulatorModel
from .nn import Network, PassWorkspace, _backward_batch, _forward_cached

logger = logging.getLogger(__name__)

# Critic scores above this are clamped inside exponentials. A healthy run
# never hits the clamp; callers count clamp events via MiEstimate.n_clamped.
EXP_CLAMP = 30.0


@dataclass
class Batch:
    """Paired joint and marginal sample blocks generated at one design.

    Row i of ``y`` replays ``draws`` row i through the path at (theta_i, d);
    row i of ``y_marg`` replays ``draws_marg`` row i at (theta_marg_i, d).
    Draws are retained so Jacobians can be evaluated at the same noise.
    """

    theta: np.ndarray
    y: np.ndarray
    theta_marg: np.ndarray
    y_marg: np.ndarray
    draws: NoiseDraw
    draws_marg: NoiseDraw
    design: np.ndarray

    def __post_init__(self):
        n = self.theta.shape[0]
        if not (self.y.shape[0] == self.theta_marg.shape[0] == self.y_marg.shape[0] == n):
            raise InputError(
                f"sample blocks disagree on row count: "
                f"{(n, self.y.shape[0], self.theta_marg.shape[0], self.y_marg.shape[0])}"
            )

    @property
    def size(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class MiEstimate:
    """Bound value (nats) with its two terms; value = joint - e^{-1} * marginal."""

    value: float
    joint_term: float
    marginal_term: float
    n_clamped: int = 0


def make_batch(model: SimulatorModel, d, n: int, rng: np.random.Generator) -> Batch:
    """Simulate a fresh batch at design d: joint block plus marginal block.

    theta and theta' are independent prior draws; the noise for the marginal
    block is drawn fresh (independent of the joint block's noise).
    """
    d = np.asarray(d, dtype=np.float64)
    if n < 2:
        raise InputError(f"batch size must be >= 2, got {n}")
    if not model.contains(d):
        raise InputError(f"design {d} outside the domain {model.design_domain.tolist()}")
    theta = model.prior_sampler(rng, n)
    draws = model.draw_noise(rng, n)
    y = model.sample_path(draws, theta, d)
    theta_marg = model.prior_sampler(rng, n)
    draws_marg = model.draw_noise(rng, n)
    y_marg = model.sample_path(draws_marg, theta_marg, d)
    return Batch(theta, y, theta_marg, y_marg, draws, draws_marg, d)


def rebuild_batch_at(model: SimulatorModel, batch: Batch, d) -> Batch:
    """Replay a batch's thetas and noise draws through the path at another design."""
    d = np.asarray(d, dtype=np.float64)
    return Batch(
        theta=batch.theta,
        y=model.sample_path(batch.draws, batch.theta, d),
        theta_marg=batch.theta_marg,
        y_marg=model.sample_path(batch.draws_marg, batch.theta_marg, d),
        draws=batch.draws,
        draws_marg=batch.draws_marg,
        design=d,
    )


def _critic_scores(net: Network, batch: Batch, need_cache: bool):
    """One stacked forward pass over the joint and marginal blocks."""
    n = batch.size
    x = np.concatenate(
        [
            np.concatenate([batch.theta, batch.y], axis=1),
            np.concatenate([batch.theta, batch.y_marg], axis=1),
        ],
        axis=0,
    )
    t, acts = _forward_cached(net, x)
    if not np.all(np.isfinite(t)):
        bad = t[~np.isfinite(t)]
        raise NumericalError(f"critic produced non-finite scores (first offender {bad[0]!r})")
    return t[:n], t[n:], (acts if need_cache else None)


def _estimate_from_scores(t_joint: np.ndarray, t_marg: np.ndarray):
    clamped = t_marg > EXP_CLAMP
    n_clamped = int(np.count_nonzero(clamped))
    if n_clamped:
        logger.warning(
            "clamped %d critic scores above %.0f inside the exponential (max %.3f)",
            n_clamped,
            EXP_CLAMP,
            float(t_marg.max()),
        )
    exp_marg = np.exp(np.minimum(t_marg, EXP_CLAMP))
    joint = float(t_joint.mean())
    marg = float(exp_marg.mean())
    est = MiEstimate(joint - math.exp(-1.0) * marg, joint, marg, n_clamped)
    return est, exp_marg


def mi_lower_bound(net: Network, batch: Batch) -> MiEstimate:
    """Sample-average lower bound on MI at the batch's design."""
    t_joint, t_marg, _ = _critic_scores(net, batch, need_cache=False)
    est, _ = _estimate_from_scores(t_joint, t_marg)
    return est


def make_workspace(net: Network, batch_size: int) -> PassWorkspace:
    """Buffers sized for ``bound_and_grads`` on batches of ``batch_size`` rows."""
    return PassWorkspace(net.config, 2 * batch_size)


def bound_and_grads(
    net: Network,
    batch: Batch,
    model: SimulatorModel | None = None,
    need_psi: bool = True,
    need_design: bool = False,
    workspace: PassWorkspace | None = None,
):
    """Fused bound + gradients from a single forward/backward pass.

    Returns (MiEstimate, psi_grads, design_grad); psi_grads matches
    ``net.parameters()`` order, design_grad has the design's length. The two
    gradient outputs are exact derivatives of the sample-average bound with
    the batch noise frozen.

    Passing a workspace from ``make_workspace`` reuses buffers across calls
    (the training loop's hot path); the returned gradient arrays are then
    views that the next call overwrites.
    """
    if need_design:
        if model is None:
            raise InputError("design gradient requires the model")
        if not (model.has_gradients and model.jacobian_apply is not None):
            raise CapabilityError(
                f"model {model.name!r} exposes no design Jacobian; "
                "use the gradient-free (surrogate) optimizer instead"
            )
    n = batch.size
    k = net.config.input_dim_theta
    if workspace is not None:
        if workspace.n_rows != 2 * n:
            raise InputError(f"workspace holds {workspace.n_rows} rows, batch needs {2 * n}")
        ws = workspace
        ws.x[:n, :k] = batch.theta
        ws.x[:n, k:] = batch.y
        ws.x[n:, :k] = batch.theta
        ws.x[n:, k:] = batch.y_marg
        t = ws.forward(net)
        if not np.all(np.isfinite(t)):
            bad = t[~np.isfinite(t)]
            raise NumericalError(f"critic produced non-finite scores (first offender {bad[0]!r})")
        t_joint, t_marg = t[:n], t[n:]
    else:
        t_joint, t_marg, acts = _critic_scores(net, batch, need_cache=True)
    est, exp_marg = _estimate_from_scores(t_joint, t_marg)
    if not (need_psi or need_design):
        return est, None, None
    # Per-row output weights: d(bound)/dT_i for each stacked row. Rows above
    # the clamp have zero derivative through the clamped exponential.
    w = np.empty(2 * n)
    w[:n] = 1.0 / n
    live = t_marg <= EXP_CLAMP
    w[n:] = np.where(live, -math.exp(-1.0) / n * exp_marg, 0.0)
    if workspace is not None:
        psi_grads, input_grads = workspace.backward(
            net, w, need_params=need_psi, need_inputs=need_design
        )
    else:
        psi_grads, input_grads = _backward_batch(
            net, acts, w, need_params=need_psi, need_inputs=need_design
        )
    design_grad = None
    if need_design:
        g_joint = input_grads[:n, k:]
        g_marg = input_grads[n:, k:]
        d = batch.design
        design_grad = (
            model.jacobian_apply(batch.draws, batch.theta, d, g_joint).sum(axis=0)
            + model.jacobian_apply(batch.draws_marg, batch.theta_marg, d, g_marg).sum(axis=0)
        )
    return est, psi_grads, design_grad


def grad_psi(net: Network, batch: Batch) -> list[np.ndarray]:
    """Gradient of the sample-average bound w.r.t. all critic parameters."""
    _, grads, _ = bound_and_grads(net, batch, need_psi=True, need_design=False)
    return grads


def grad_design(net: Network, batch: Batch, model: SimulatorModel) -> np.ndarray:
    """Pathwise gradient of the sample-average bound w.r.t. the design."""
    _, _, grad = bound_and_grads(net, batch, model, need_psi=False, need_design=True)
    return grad


def moving_average(trace, window: int) -> np.ndarray:
    """Trailing mean over the last min(window, i+1) entries; same length as input."""
    if window < 1:
        raise InputError(f"window must be >= 1, got {window}")
    trace = np.asarray(trace, dtype=np.float64)
    if trace.size == 0:
        return trace.copy()
    csum = np.cumsum(trace)
    out = np.empty_like(trace)
    head = min(window, trace.size)
    out[:head] = csum[:head] / np.arange(1, head + 1)
    if trace.size > window:
        out[window:] = (csum[window:] - csum[:-window]) / window
    return out
