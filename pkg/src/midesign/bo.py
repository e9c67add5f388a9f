"""Gradient-free design optimization with a Gaussian-process surrogate.

For models without sampling-path Jacobians the design is optimized by
Bayesian optimization: a GP with a Matern-5/2 kernel models the mapping from
design to (validated) MI lower bound, expected improvement picks the next
probe, and a fresh critic is trained from scratch at every probed design —
re-using a critic across distant designs trains poorly because the data
distribution shifts too much.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from .errors import ConfigurationError, FitError, InputError
from .models import SimulatorModel
from .nn import NetworkConfig
from .trainer import TrainConfig, TrainResult, train_joint, validation_score

logger = logging.getLogger(__name__)

_JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
NOISE_FLOOR = 1e-6


@dataclass(frozen=True)
class GpHyper:
    """Matern-5/2 hyperparameters: signal variance, lengthscale(s), noise variance."""

    signal_var: float
    lengthscale: np.ndarray  # scalar array or per-dimension
    noise_var: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=np.float64))
        object.__setattr__(self, "lengthscale", ls)
        if self.signal_var <= 0 or self.noise_var < 0 or np.any(ls <= 0):
            raise InputError(
                f"hyperparameters must be positive: signal_var={self.signal_var}, "
                f"lengthscale={ls.tolist()}, noise_var={self.noise_var}"
            )


def matern52(x1, x2, hyper: GpHyper) -> float:
    """Matern-5/2 kernel sigma^2 (1 + sqrt5 r + 5 r^2/3) exp(-sqrt5 r) at scaled distance r."""
    x1 = np.asarray(x1, dtype=np.float64).ravel()
    x2 = np.asarray(x2, dtype=np.float64).ravel()
    if x1.shape != x2.shape:
        raise InputError(f"kernel inputs have different dims: {x1.shape} vs {x2.shape}")
    r = math.sqrt(float(np.sum(((x1 - x2) / hyper.lengthscale) ** 2)))
    s5r = math.sqrt(5.0) * r
    return hyper.signal_var * (1.0 + s5r + 5.0 * r * r / 3.0) * math.exp(-s5r)


def _kernel_matrix(xa: np.ndarray, xb: np.ndarray, hyper: GpHyper) -> np.ndarray:
    sa = xa / hyper.lengthscale
    sb = xb / hyper.lengthscale
    sq = np.sum(sa**2, axis=1)[:, None] + np.sum(sb**2, axis=1)[None, :] - 2.0 * sa @ sb.T
    r = np.sqrt(np.maximum(sq, 0.0))
    s5r = math.sqrt(5.0) * r
    return hyper.signal_var * (1.0 + s5r + 5.0 * r * r / 3.0) * np.exp(-s5r)


@dataclass
class GaussianProcess:
    """Fitted surrogate: observations, hyperparameters, cached factorization."""

    X: np.ndarray
    f: np.ndarray
    hyper: GpHyper
    mean_const: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float


def _factorize(X: np.ndarray, f_centered: np.ndarray, hyper: GpHyper):
    k = _kernel_matrix(X, X, hyper) + hyper.noise_var * np.eye(X.shape[0])
    for jitter in _JITTERS:
        try:
            chol = np.linalg.cholesky(k + jitter * np.eye(X.shape[0]))
        except np.linalg.LinAlgError:
            continue
        if jitter > 0:
            logger.warning("kernel matrix needed jitter %.1e to factorize", jitter)
        alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, f_centered))
        return chol, alpha, jitter
    raise FitError("kernel matrix is not positive definite even with maximum jitter")


def _log_marginal_likelihood(X: np.ndarray, f_centered: np.ndarray, hyper: GpHyper) -> float:
    try:
        chol, alpha, _ = _factorize(X, f_centered, hyper)
    except FitError:
        return -np.inf
    n = X.shape[0]
    return float(
        -0.5 * f_centered @ alpha
        - np.sum(np.log(np.diag(chol)))
        - 0.5 * n * math.log(2.0 * math.pi)
    )


@dataclass(frozen=True)
class GpFitConfig:
    n_restarts: int = 8
    seed: int = 0
    noise_floor: float = NOISE_FLOOR
    per_dimension_lengthscale: bool = False


def gp_fit(X, f, config: GpFitConfig = GpFitConfig()) -> GaussianProcess:
    """Fit hyperparameters by multi-start maximization of the log marginal likelihood.

    Deterministic given ``config.seed``. The observation-noise variance is
    fitted with a floor of ``config.noise_floor``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    f = np.asarray(f, dtype=np.float64).ravel()
    if X.shape[0] != f.shape[0]:
        raise InputError(f"X has {X.shape[0]} rows but f has {f.shape[0]} values")
    if X.shape[0] < 2:
        raise InputError("gp_fit requires at least 2 observations")
    n, dim = X.shape
    n_ls = dim if config.per_dimension_lengthscale else 1
    mean_const = float(f.mean())
    fc = f - mean_const

    f_var = max(float(fc.var()), 1e-8)
    span = np.maximum(X.max(axis=0) - X.min(axis=0), 1e-8)
    ls0 = float(np.mean(span)) / 3.0

    def unpack(z):
        return GpHyper(
            signal_var=math.exp(z[0]),
            lengthscale=np.exp(z[1 : 1 + n_ls]),
            noise_var=max(math.exp(z[-1]), config.noise_floor),
        )

    def objective(z):
        if np.any(np.abs(z) > 40.0):
            return np.inf
        return -_log_marginal_likelihood(X, fc, unpack(z))

    starts = [np.concatenate([[math.log(f_var)], np.full(n_ls, math.log(ls0)), [math.log(0.05 * f_var + 1e-8)]])]
    rng = np.random.default_rng(config.seed)
    for _ in range(config.n_restarts - 1):
        starts.append(
            np.concatenate(
                [
                    [math.log(f_var) + rng.uniform(-2.0, 2.0)],
                    np.log(ls0) + rng.uniform(-2.5, 2.5, size=n_ls),
                    [math.log(f_var + 1e-8) + rng.uniform(-8.0, 0.0)],
                ]
            )
        )
    best_z, best_val = None, np.inf
    for z0 in starts:
        res = minimize(objective, z0, method="Nelder-Mead", options={"maxiter": 400, "xatol": 1e-3, "fatol": 1e-6})
        if res.fun < best_val:
            best_val, best_z = res.fun, res.x
    if best_z is None or not np.isfinite(best_val):
        raise FitError("hyperparameter search found no finite log marginal likelihood")
    hyper = unpack(best_z)
    chol, alpha, jitter = _factorize(X, fc, hyper)
    return GaussianProcess(X=X, f=f, hyper=hyper, mean_const=mean_const, chol=chol, alpha=alpha, jitter=jitter)


def gp_predict(gp: GaussianProcess, x):
    """Posterior predictive mean and variance at x ((D,) or (n, D))."""
    x_arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    single = np.asarray(x).ndim == 1
    ks = _kernel_matrix(x_arr, gp.X, gp.hyper)
    mean = gp.mean_const + ks @ gp.alpha
    v = np.linalg.solve(gp.chol, ks.T)
    var = gp.hyper.signal_var - np.sum(v * v, axis=0)
    neg = var < 0.0
    if np.any(var < -1e-8):
        logger.warning("clamped %d negative predictive variances (min %.3e)", int(neg.sum()), float(var.min()))
    var = np.maximum(var, 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def _ei_value(mean, std, best: float):
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    improve = mean - best
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0.0, improve / np.where(std > 0.0, std, 1.0), 0.0)
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    ei = np.where(std > 0.0, improve * ndtr(z) + std * phi, 0.0)
    return np.maximum(ei, 0.0)


def expected_improvement(gp: GaussianProcess, x, best_so_far: float):
    """Closed-form EI for maximization; zero wherever the posterior is certain."""
    mean, var = gp_predict(gp, x)
    out = _ei_value(mean, np.sqrt(var), best_so_far)
    return float(out) if np.isscalar(mean) else out


def latin_hypercube(domain: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Space-filling initial probes: one stratified draw per dimension."""
    dim = domain.shape[0]
    u = (rng.permuted(np.tile(np.arange(n), (dim, 1)), axis=1).T + rng.uniform(size=(n, dim))) / n
    return domain[:, 0] + u * (domain[:, 1] - domain[:, 0])


def _maximize_ei(gp: GaussianProcess, domain: np.ndarray, best: float, restarts: int, rng) -> np.ndarray:
    """Multi-start coordinate-wise pattern search of the acquisition."""
    dim = domain.shape[0]
    span = domain[:, 1] - domain[:, 0]
    starts = [gp.X[int(np.argmax(gp.f))]]
    if restarts > 1:
        starts.extend(latin_hypercube(domain, restarts - 1, rng))
    best_x, best_ei = None, -1.0
    for x0 in starts:
        x = np.clip(np.asarray(x0, dtype=np.float64).copy(), domain[:, 0], domain[:, 1])
        ei = float(expected_improvement(gp, x, best))
        step = 0.25 * span.copy()
        while np.max(step / span) > 1e-3:
            improved = False
            for j in range(dim):
                for sign in (1.0, -1.0):
                    cand = x.copy()
                    cand[j] = np.clip(cand[j] + sign * step[j], domain[j, 0], domain[j, 1])
                    cei = float(expected_improvement(gp, cand, best))
                    if cei > ei:
                        x, ei, improved = cand, cei, True
            if not improved:
                step *= 0.5
        if ei > best_ei:
            best_x, best_ei = x, ei
    return best_x


@dataclass(frozen=True)
class BoConfig:
    """Probe budget and per-evaluation critic training settings."""

    initial_probe_count: int
    budget: int
    train: TrainConfig
    network: NetworkConfig
    acquisition_restarts: int = 32
    n_validation_sets: int = 3
    seed: int = 0
    gp_fit: GpFitConfig = GpFitConfig()

    def __post_init__(self):
        if not self.budget >= self.initial_probe_count >= 1:
            raise ConfigurationError(
                f"requires budget >= initial_probe_count >= 1, "
                f"got ({self.budget}, {self.initial_probe_count})"
            )


@dataclass
class BoResult:
    design: np.ndarray
    objective: float
    probe_designs: np.ndarray
    objectives: np.ndarray  # NaN where a probe failed
    train_results: list[Optional[TrainResult]]
    gp: Optional[GaussianProcess]
    incumbent_index: int


def make_probe_objective(model: SimulatorModel, cfg: BoConfig) -> Callable[[np.ndarray, int], tuple[float, TrainResult]]:
    """Objective evaluated at a probed design: train a fresh critic at fixed d
    (zero design schedule) and score it on fresh validation sets — a lower-noise
    target for the surrogate than the final training-trace value."""

    def evaluate(d: np.ndarray, probe_index: int):
        seed = int(np.random.SeedSequence((cfg.seed, probe_index)).generate_state(1)[0])
        traincfg = replace(
            cfg.train,
            seed=seed,
            design_init=tuple(float(v) for v in d),
            lr_design=replace(cfg.train.lr_design, initial_rate=0.0),
        )
        netcfg = replace(cfg.network, seed=seed + 1)
        result = train_joint(model, netcfg, traincfg)
        mean, _ = validation_score(
            result.network,
            model,
            d,
            n_sets=cfg.n_validation_sets,
            set_size=cfg.train.batch_size,
            rng=np.random.default_rng(seed + 2),
        )
        return mean, result

    return evaluate


def bo_optimize(
    model: SimulatorModel,
    cfg: BoConfig,
    objective: Optional[Callable] = None,
) -> BoResult:
    """Optimize the design by expected improvement over a GP surrogate.

    Initial probes are a Latin-hypercube design; every later probe maximizes
    EI. ``objective(d, probe_index) -> (value, TrainResult | None)`` may be
    supplied to replace critic training (deterministic test objectives).
    Failed probes are recorded as missing and skipped by the surrogate.
    """
    rng = np.random.default_rng(cfg.seed)
    evaluate = objective if objective is not None else make_probe_objective(model, cfg)
    domain = model.design_domain

    probes = list(latin_hypercube(domain, cfg.initial_probe_count, rng))
    designs: list[np.ndarray] = []
    values: list[float] = []
    results: list[Optional[TrainResult]] = []

    def run_probe(d: np.ndarray):
        d = np.clip(d, domain[:, 0], domain[:, 1])
        try:
            out = evaluate(d, len(designs))
            value, res = out if isinstance(out, tuple) else (out, None)
            value = float(value)
        except Exception as exc:  # noqa: BLE001 - probe isolation is the contract
            logger.warning("probe at %s failed: %s", d.tolist(), exc)
            value, res = math.nan, None
        designs.append(d)
        values.append(value)
        results.append(res)

    for d in probes:
        run_probe(d)

    gp = None
    while len(designs) < cfg.budget:
        x = np.asarray(designs)
        v = np.asarray(values)
        ok = np.isfinite(v)
        if ok.sum() >= 2:
            gp = gp_fit(x[ok], v[ok], cfg.gp_fit)
            nxt = _maximize_ei(gp, domain, float(v[ok].max()), cfg.acquisition_restarts, rng)
        else:
            nxt = latin_hypercube(domain, 1, rng)[0]
        run_probe(nxt)

    v = np.asarray(values)
    ok = np.isfinite(v)
    if not np.any(ok):
        raise FitError("every probe failed; no incumbent design")
    if ok.sum() >= 2:
        gp = gp_fit(np.asarray(designs)[ok], v[ok], cfg.gp_fit)
    incumbent = int(np.flatnonzero(ok)[np.argmax(v[ok])])
    return BoResult(
        design=designs[incumbent],
        objective=float(v[incumbent]),
        probe_designs=np.asarray(designs),
        objectives=v,
        train_results=results,
        gp=gp,
        incumbent_index=incumbent,
    )
