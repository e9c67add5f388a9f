"""Joint gradient ascent over critic parameters and the design vector.

One epoch simulates a fresh batch at the current design, takes an Adam
ascent step on the critic parameters and an Adam ascent step on the design
(separate optimizer states, separate schedules), and applies the bounded-
domain rule: any proposed coordinate that would leave the domain is ignored
and the previous value kept.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import CapabilityError, ConfigurationError, InputError, NumericalError
from .estimator import bound_and_grads, make_batch, make_workspace, mi_lower_bound, moving_average
from .models import SimulatorModel
from .nn import (
    AdamState,
    LrSchedule,
    Network,
    NetworkConfig,
    adam_step,
    init_network,
    schedule_rate,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Epoch budget, batch size, learning-rate schedules and seeding.

    ``design_init`` is an explicit starting design; None draws one uniformly
    from the domain. A zero design schedule trains the critic at fixed design.
    """

    epochs: int
    batch_size: int
    lr_psi: LrSchedule
    lr_design: LrSchedule
    seed: int = 0
    design_init: Optional[tuple[float, ...]] = None
    moving_average_window: int = 100

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.moving_average_window < 1:
            raise ConfigurationError("moving_average_window must be >= 1")
        if self.design_init is not None:
            object.__setattr__(self, "design_init", tuple(float(v) for v in self.design_init))


@dataclass
class TrainTrace:
    """Per-epoch log: raw bound, smoothed bound, and post-update design."""

    epoch: np.ndarray
    bound: np.ndarray
    bound_smoothed: np.ndarray
    designs: np.ndarray  # (epochs, design_dim)

    def __len__(self) -> int:
        return int(self.epoch.shape[0])


@dataclass
class TrainResult:
    design: np.ndarray
    network: Network
    trace: TrainTrace
    warnings: dict[str, int]


def apply_domain_rule(d_prev: np.ndarray, d_proposed: np.ndarray, domain: np.ndarray) -> np.ndarray:
    """Per coordinate: keep the previous value if the proposal exits the domain.

    This is an ignore rule, not a clip: an offending coordinate reverts to
    its previous value rather than landing on the boundary.
    """
    d_prev = np.asarray(d_prev, dtype=np.float64)
    d_proposed = np.asarray(d_proposed, dtype=np.float64)
    domain = np.asarray(domain, dtype=np.float64)
    inside = (d_proposed >= domain[:, 0]) & (d_proposed <= domain[:, 1])
    return np.where(inside, d_proposed, d_prev)


def _initial_design(model: SimulatorModel, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    dom = model.design_domain
    if cfg.design_init is None:
        return rng.uniform(dom[:, 0], dom[:, 1])
    d0 = np.asarray(cfg.design_init, dtype=np.float64)
    if d0.shape != (model.design_dim,):
        raise ConfigurationError(
            f"design_init has shape {d0.shape}, expected ({model.design_dim},)"
        )
    if not model.contains(d0):
        raise ConfigurationError(f"design_init {d0.tolist()} outside the domain")
    return d0


def train_joint(model: SimulatorModel, netcfg: NetworkConfig, cfg: TrainConfig) -> TrainResult:
    """Maximize the MI lower bound jointly over critic parameters and design.

    Per epoch, both gradients are evaluated at the same (parameters, design)
    point on the same fresh batch, then both Adam updates are applied.
    Deterministic given the seeds in ``netcfg`` and ``cfg``.
    """
    update_design = cfg.lr_design.initial_rate > 0.0
    if update_design and not model.has_gradients:
        raise CapabilityError(
            f"model {model.name!r} exposes no design Jacobian; train with a zero "
            "design schedule or use the gradient-free (surrogate) optimizer"
        )
    if netcfg.input_dim_theta != model.theta_dim or netcfg.input_dim_y != model.data_dim:
        raise ConfigurationError(
            f"network dims ({netcfg.input_dim_theta}, {netcfg.input_dim_y}) do not match "
            f"model dims ({model.theta_dim}, {model.data_dim})"
        )

    rng = np.random.default_rng(cfg.seed)
    net = init_network(netcfg)
    d = _initial_design(model, cfg, rng)
    params = net.parameters()
    psi_state = AdamState.for_params(params)
    d_state = AdamState.for_params([d])
    workspace = make_workspace(net, cfg.batch_size) if cfg.epochs else None

    bounds = np.empty(cfg.epochs)
    designs = np.empty((cfg.epochs, model.design_dim))
    n_clamped = 0
    n_rejected = 0

    for epoch in range(cfg.epochs):
        batch = make_batch(model, d, cfg.batch_size, rng)
        est, psi_grads, d_grad = bound_and_grads(
            net, batch, model, need_psi=True, need_design=update_design, workspace=workspace
        )
        if not np.isfinite(est.value):
            raise NumericalError(
                f"non-finite bound at epoch {epoch}: value={est.value!r}, "
                f"design={d.tolist()}, joint={est.joint_term!r}, marginal={est.marginal_term!r}"
            )
        n_clamped += est.n_clamped
        try:
            params, psi_state = adam_step(params, psi_grads, psi_state, schedule_rate(cfg.lr_psi, epoch))
        except NumericalError as exc:
            raise NumericalError(f"epoch {epoch}: {exc}") from exc
        net.set_parameters(params)
        if update_design:
            try:
                (d_prop,), d_state = adam_step([d], [d_grad], d_state, schedule_rate(cfg.lr_design, epoch))
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}: {exc}") from exc
            d_new = apply_domain_rule(d, d_prop, model.design_domain)
            n_rejected += int(np.count_nonzero(d_new != d_prop))
            d = d_new
        bounds[epoch] = est.value
        designs[epoch] = d

    trace = TrainTrace(
        epoch=np.arange(cfg.epochs),
        bound=bounds,
        bound_smoothed=moving_average(bounds, cfg.moving_average_window),
        designs=designs,
    )
    return TrainResult(
        design=d,
        network=net,
        trace=trace,
        warnings={"exp_clamped": n_clamped, "design_updates_rejected": n_rejected},
    )


def validation_score(
    net: Network,
    model: SimulatorModel,
    d,
    n_sets: int,
    set_size: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Mean and sample std of the bound over freshly simulated batches at fixed d."""
    if n_sets < 1:
        raise InputError(f"n_sets must be >= 1, got {n_sets}")
    values = np.array(
        [mi_lower_bound(net, make_batch(model, d, set_size, rng)).value for _ in range(n_sets)]
    )
    if n_sets == 1:
        logger.warning("validation with a single set: std reported as 0 by convention")
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1))


@dataclass
class GridCandidateResult:
    network_config: NetworkConfig
    train_config: TrainConfig
    score_mean: Optional[float]
    score_std: Optional[float]
    train_result: Optional[TrainResult]
    error: Optional[str] = None


def derive_candidate_seed(netcfg: NetworkConfig, traincfg: TrainConfig, base_seed: int, tag: str) -> int:
    """Stable per-candidate seed from the candidate's content and a role tag."""
    text = f"{base_seed}|{tag}|{netcfg!r}|{traincfg!r}"
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def grid_search(
    candidates: list[tuple[NetworkConfig, TrainConfig]],
    model: SimulatorModel,
    base_seed: int = 0,
    n_validation_sets: int = 10,
    validation_set_size: Optional[int] = None,
) -> list[GridCandidateResult]:
    """Train every candidate end-to-end and rank by validation-score mean.

    Seeds are derived from each candidate's content, so identical candidates
    produce identical scores. Candidate failures are recorded and ranked
    last, never fatal.
    """
    if not candidates:
        raise InputError("candidate list is empty")
    results: list[GridCandidateResult] = []
    for netcfg, traincfg in candidates:
        net_seed = derive_candidate_seed(netcfg, traincfg, base_seed, "net")
        train_seed = derive_candidate_seed(netcfg, traincfg, base_seed, "train")
        val_seed = derive_candidate_seed(netcfg, traincfg, base_seed, "val")
        try:
            res = train_joint(
                model,
                replace(netcfg, seed=net_seed),
                replace(traincfg, seed=train_seed),
            )
            mean, std = validation_score(
                res.network,
                model,
                res.design,
                n_sets=n_validation_sets,
                set_size=validation_set_size or traincfg.batch_size,
                rng=np.random.default_rng(val_seed),
            )
            results.append(GridCandidateResult(netcfg, traincfg, mean, std, res))
        except Exception as exc:  # noqa: BLE001 - candidate isolation is the contract
            logger.warning("grid candidate failed: %s", exc)
            results.append(GridCandidateResult(netcfg, traincfg, None, None, None, str(exc)))
    results.sort(key=lambda r: -np.inf if r.score_mean is None else r.score_mean, reverse=True)
    return results
