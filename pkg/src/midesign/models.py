"""Implicit-model catalog: sampling paths, design Jacobians, priors, domains.

Every model is specified by a deterministic sampling path y = h(eps; theta, d)
driven by reified base-noise draws, so that the same draw can be replayed
through the path and (where available) through the analytic design Jacobian
J[i, j] = dy_i / dd_j. All path functions broadcast over a leading batch axis:
theta may be (theta_dim,) or (N, theta_dim), noise arrays likewise.

Models provided:

* noisy linear      y = theta0 + theta1 * d + eps + nu,  eps ~ N(0,1), nu ~ Gamma(2,2)
* gaussian linear   the same path without the Gamma term (closed-form MI exists)
* pharmacokinetic   y = (400/V) * ka/(ka-ke) * (exp(-ke t) - exp(-ka t)) * (1+eps) + nu
* oscillatory       y = sin(omega * t) + 0.1 * eps          (no Jacobian exposed)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, InputError

PK_DOSE_OVER_VOLUME = 400.0  # D_V, dose constant of the pharmacokinetic latent path
PK_EPS_STD = 0.01  # multiplicative (heteroscedastic) noise scale
PK_NU_STD = 0.1  # additive observation noise scale
OSC_NOISE_STD = 0.1


@dataclass
class NoiseDraw:
    """Base-noise realizations, stored so a draw can be replayed exactly.

    ``eps`` and ``nu`` carry whatever the model's path consumes; shapes have
    a leading batch axis when the draw covers a batch. For the linear and
    pharmacokinetic models the stored values are the realized noise (already
    scaled); the oscillatory model stores standard normals and scales inside
    the path.
    """

    eps: np.ndarray
    nu: Optional[np.ndarray] = None

    def rows(self, idx) -> "NoiseDraw":
        return NoiseDraw(self.eps[idx], None if self.nu is None else self.nu[idx])


@dataclass(frozen=True)
class SimulatorModel:
    """A simulator: sampling path, optional design-Jacobian, prior, domain.

    ``jacobian(draw, theta, d)`` returns the (data_dim, design_dim) matrix for
    a single sample. ``jacobian_apply(draw, theta, d, g)`` computes the
    batched product J_i^T g_i -> (N, design_dim) without materializing the
    matrices; it exists iff ``jacobian`` does.
    """

    name: str
    theta_dim: int
    design_dim: int
    data_dim: int
    design_domain: np.ndarray  # (design_dim, 2) closed interval bounds
    sample_path: Callable[[NoiseDraw, np.ndarray, np.ndarray], np.ndarray]
    draw_noise: Callable[[np.random.Generator, int], NoiseDraw]
    prior_sampler: Callable[..., np.ndarray]  # (rng, n=None)
    jacobian: Optional[Callable] = None
    jacobian_apply: Optional[Callable] = None
    prior_logpdf: Optional[Callable[[np.ndarray], np.ndarray]] = None
    has_gradients: bool = False

    def __post_init__(self):
        dom = np.asarray(self.design_domain, dtype=np.float64)
        if dom.shape != (self.design_dim, 2):
            raise ConfigurationError(f"design_domain shape {dom.shape} != ({self.design_dim}, 2)")
        if not np.all(np.isfinite(dom)):
            raise ConfigurationError("design_domain bounds must be finite")
        if not np.all(dom[:, 0] < dom[:, 1]):
            raise ConfigurationError("design_domain requires lower < upper per coordinate")
        object.__setattr__(self, "design_domain", dom)

    def contains(self, d: np.ndarray) -> bool:
        d = np.asarray(d, dtype=np.float64)
        return bool(np.all(d >= self.design_domain[:, 0]) and np.all(d <= self.design_domain[:, 1]))


def _check_design(d, design_dim: int) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (design_dim,):
        raise InputError(f"design has shape {d.shape}, expected ({design_dim},)")
    return d


# ---------------------------------------------------------------------------
# noisy linear model


def linear_sample(theta, d, draw: NoiseDraw) -> np.ndarray:
    """y_i = theta0 + theta1 * d_i + eps_i + nu_i, componentwise."""
    theta = np.asarray(theta, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    t0 = theta[..., 0:1]
    t1 = theta[..., 1:2]
    y = t0 + t1 * d + draw.eps
    if draw.nu is not None:
        y = y + draw.nu
    return y


def linear_jacobian(theta, d) -> np.ndarray:
    """J = theta1 * I; constant in the design and in the noise."""
    theta = np.asarray(theta, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    return theta[1] * np.eye(d.shape[-1])


def _linear_jacobian_apply(draw: NoiseDraw, theta, d, g) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    return theta[..., 1:2] * g


def gamma_sample(shape: float, scale: float, rng: np.random.Generator, size=None):
    """Gamma draw under the shape-scale convention (mean shape*scale)."""
    if shape <= 0 or scale <= 0:
        raise InputError(f"gamma requires shape, scale > 0, got ({shape}, {scale})")
    return rng.gamma(shape, scale, size=size)


def _diag_normal_sampler(mean: np.ndarray, std: np.ndarray):
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)

    def sample(rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
        if n is None:
            return mean + std * rng.standard_normal(mean.shape)
        return mean + std * rng.standard_normal((n, mean.shape[0]))

    return sample


def _diag_normal_logpdf(mean: np.ndarray, std: np.ndarray):
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    log_norm = -0.5 * mean.shape[0] * math.log(2.0 * math.pi) - np.log(std).sum()

    def logpdf(theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        z = (theta - mean) / std
        return log_norm - 0.5 * np.sum(z * z, axis=-1)

    return logpdf


def make_linear_model(
    design_dim: int,
    prior_mean=(0.0, 0.0),
    prior_std=(3.0, 3.0),
    domain=(-10.0, 10.0),
    gamma_shape: float = 2.0,
    gamma_scale: float = 2.0,
) -> SimulatorModel:
    """Linear response with Gaussian and Gamma noise sources.

    The prior is an independent normal on (offset, slope); a degenerate
    std of 0 pins a coordinate (useful for independence checks).
    """
    prior_std_arr = np.asarray(prior_std, dtype=np.float64)

    def draw_noise(rng: np.random.Generator, n: int) -> NoiseDraw:
        return NoiseDraw(
            eps=rng.standard_normal((n, design_dim)),
            nu=gamma_sample(gamma_shape, gamma_scale, rng, size=(n, design_dim)),
        )

    logpdf = None
    if np.all(prior_std_arr > 0):
        logpdf = _diag_normal_logpdf(np.asarray(prior_mean), prior_std_arr)

    return SimulatorModel(
        name="linear",
        theta_dim=2,
        design_dim=design_dim,
        data_dim=design_dim,
        design_domain=np.tile(np.asarray(domain, dtype=np.float64), (design_dim, 1)),
        sample_path=lambda draw, theta, d: linear_sample(theta, d, draw),
        draw_noise=draw_noise,
        prior_sampler=_diag_normal_sampler(np.asarray(prior_mean), prior_std_arr),
        jacobian=lambda draw, theta, d: linear_jacobian(theta, d),
        jacobian_apply=_linear_jacobian_apply,
        prior_logpdf=logpdf,
        has_gradients=True,
    )


# ---------------------------------------------------------------------------
# pure-Gaussian linear model (closed-form MI exists; used as a validation anchor)


def gaussian_linear_sample(theta, d, draw: NoiseDraw) -> np.ndarray:
    """Linear path with the Gamma term removed: y = theta0 + theta1 * d + eps."""
    return linear_sample(theta, d, NoiseDraw(draw.eps, None))


def gaussian_linear_jacobian(theta, d) -> np.ndarray:
    return linear_jacobian(theta, d)


def make_gaussian_linear_model(
    design_dim: int,
    prior_mean=(0.0, 0.0),
    prior_std=(3.0, 3.0),
    noise_std: float = 1.0,
    domain=(-10.0, 10.0),
) -> SimulatorModel:
    prior_std_arr = np.asarray(prior_std, dtype=np.float64)

    def draw_noise(rng: np.random.Generator, n: int) -> NoiseDraw:
        return NoiseDraw(eps=noise_std * rng.standard_normal((n, design_dim)))

    logpdf = None
    if np.all(prior_std_arr > 0):
        logpdf = _diag_normal_logpdf(np.asarray(prior_mean), prior_std_arr)

    return SimulatorModel(
        name="gaussian-linear",
        theta_dim=2,
        design_dim=design_dim,
        data_dim=design_dim,
        design_domain=np.tile(np.asarray(domain, dtype=np.float64), (design_dim, 1)),
        sample_path=lambda draw, theta, d: gaussian_linear_sample(theta, d, draw),
        draw_noise=draw_noise,
        prior_sampler=_diag_normal_sampler(np.asarray(prior_mean), prior_std_arr),
        jacobian=lambda draw, theta, d: gaussian_linear_jacobian(theta, d),
        jacobian_apply=_linear_jacobian_apply,
        prior_logpdf=logpdf,
        has_gradients=True,
    )


# ---------------------------------------------------------------------------
# pharmacokinetic model


@dataclass(frozen=True)
class PkParams:
    """Absorption rate, elimination rate (1/hour) and volume of distribution (l)."""

    k_a: float
    k_e: float
    V: float

    def __post_init__(self):
        if not (self.k_a > self.k_e > 0.0):
            raise InputError(f"requires k_a > k_e > 0, got k_a={self.k_a}, k_e={self.k_e}")
        if self.V <= 0.0:
            raise InputError(f"requires V > 0, got {self.V}")

    def as_array(self) -> np.ndarray:
        return np.array([self.k_a, self.k_e, self.V])


def _pk_unpack(theta):
    theta = np.asarray(theta, dtype=np.float64)
    ka = theta[..., 0:1]
    ke = theta[..., 1:2]
    vol = theta[..., 2:3]
    if np.any(ka == ke):
        raise InputError("singular parameters: k_a == k_e")
    return ka, ke, vol


def pk_curve(theta, t) -> np.ndarray:
    """Noise-free concentration (400/V) * ka/(ka-ke) * (exp(-ke t) - exp(-ka t))."""
    ka, ke, vol = _pk_unpack(theta)
    t = np.asarray(t, dtype=np.float64)
    return (PK_DOSE_OVER_VOLUME / vol) * (ka / (ka - ke)) * (np.exp(-ke * t) - np.exp(-ka * t))


def pk_curve_dt(theta, t) -> np.ndarray:
    """Time derivative of the noise-free concentration curve."""
    ka, ke, vol = _pk_unpack(theta)
    t = np.asarray(t, dtype=np.float64)
    return (PK_DOSE_OVER_VOLUME / vol) * (ka / (ka - ke)) * (
        -ke * np.exp(-ke * t) + ka * np.exp(-ka * t)
    )


def pk_sample(theta, t, draw: NoiseDraw) -> np.ndarray:
    """y_i = curve(t_i) * (1 + eps_i) + nu_i; one independent draw per patient."""
    theta = theta.as_array() if isinstance(theta, PkParams) else theta
    y = pk_curve(theta, t) * (1.0 + draw.eps)
    if draw.nu is not None:
        y = y + draw.nu
    return y


def pk_jacobian(theta, t, draw: NoiseDraw) -> np.ndarray:
    """Diagonal Jacobian d y_i / d t_i = curve'(t_i) * (1 + eps_i).

    Must be evaluated with the same eps realization as the paired
    ``pk_sample`` call; measurements are independent across patients, hence
    the diagonal shape.
    """
    theta = theta.as_array() if isinstance(theta, PkParams) else theta
    return np.diag(pk_curve_dt(theta, t) * (1.0 + draw.eps))


def _pk_jacobian_apply(draw: NoiseDraw, theta, t, g) -> np.ndarray:
    return pk_curve_dt(theta, t) * (1.0 + draw.eps) * g


PK_PRIOR_LOG_MEAN = np.log(np.array([1.0, 0.1, 20.0]))
PK_PRIOR_LOG_VAR = 0.05


def pk_prior_sample(rng: np.random.Generator, n: Optional[int] = None, reject: bool = True):
    """Log-normal prior draw, resampled until k_a > k_e.

    log theta ~ N([log 1, log 0.1, log 20], 0.05 I). ``reject=False`` returns
    the unconstrained draw (moment checks are defined on those).
    """
    m = 1 if n is None else n
    std = math.sqrt(PK_PRIOR_LOG_VAR)
    out = np.exp(PK_PRIOR_LOG_MEAN + std * rng.standard_normal((m, 3)))
    if reject:
        bad = out[:, 0] <= out[:, 1]
        while np.any(bad):
            k = int(bad.sum())
            out[bad] = np.exp(PK_PRIOR_LOG_MEAN + std * rng.standard_normal((k, 3)))
            bad = out[:, 0] <= out[:, 1]
    return out[0] if n is None else out


def _pk_prior_logpdf(theta) -> np.ndarray:
    # Unconstrained log-normal density; the k_a > k_e truncation correction is
    # negligible (rejection probability ~ 1e-12) and left out.
    theta = np.asarray(theta, dtype=np.float64)
    logt = np.log(theta)
    z = (logt - PK_PRIOR_LOG_MEAN) / math.sqrt(PK_PRIOR_LOG_VAR)
    log_norm = -1.5 * math.log(2.0 * math.pi * PK_PRIOR_LOG_VAR)
    return log_norm - 0.5 * np.sum(z * z, axis=-1) - np.sum(logt, axis=-1)


def make_pk_model(design_dim: int, domain=(0.0, 24.0)) -> SimulatorModel:
    def draw_noise(rng: np.random.Generator, n: int) -> NoiseDraw:
        return NoiseDraw(
            eps=PK_EPS_STD * rng.standard_normal((n, design_dim)),
            nu=PK_NU_STD * rng.standard_normal((n, design_dim)),
        )

    return SimulatorModel(
        name="pk",
        theta_dim=3,
        design_dim=design_dim,
        data_dim=design_dim,
        design_domain=np.tile(np.asarray(domain, dtype=np.float64), (design_dim, 1)),
        sample_path=lambda draw, theta, t: pk_sample(theta, t, draw),
        draw_noise=draw_noise,
        prior_sampler=pk_prior_sample,
        jacobian=lambda draw, theta, t: pk_jacobian(theta, t, draw),
        jacobian_apply=_pk_jacobian_apply,
        prior_logpdf=_pk_prior_logpdf,
        has_gradients=True,
    )


# ---------------------------------------------------------------------------
# oscillatory model (design gradients deliberately not exposed; exercised by
# the gradient-free optimizer and as an analytic-likelihood fixture)


def oscillatory_sample(omega, t, draw: NoiseDraw) -> np.ndarray:
    """y = sin(omega * t) + 0.1 * eps with eps standard normal."""
    omega = np.asarray(omega, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    return np.sin(omega * t) + OSC_NOISE_STD * draw.eps


def make_oscillatory_model(
    domain=(0.0, 4.0 * math.pi),
    prior_low: float = 0.0,
    prior_high: float = math.pi,
) -> SimulatorModel:
    width = prior_high - prior_low
    if width <= 0:
        raise ConfigurationError("oscillatory prior requires prior_low < prior_high")

    def draw_noise(rng: np.random.Generator, n: int) -> NoiseDraw:
        return NoiseDraw(eps=rng.standard_normal((n, 1)))

    def prior_sampler(rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
        if n is None:
            return rng.uniform(prior_low, prior_high, size=1)
        return rng.uniform(prior_low, prior_high, size=(n, 1))

    def prior_logpdf(theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        om = theta[..., 0]
        inside = (om >= prior_low) & (om <= prior_high)
        return np.where(inside, -math.log(width), -np.inf)

    return SimulatorModel(
        name="oscillatory",
        theta_dim=1,
        design_dim=1,
        data_dim=1,
        design_domain=np.asarray([domain], dtype=np.float64),
        sample_path=lambda draw, omega, t: oscillatory_sample(omega, t, draw),
        draw_noise=draw_noise,
        prior_sampler=prior_sampler,
        jacobian=None,
        jacobian_apply=None,
        prior_logpdf=prior_logpdf,
        has_gradients=False,
    )
