"""Feed-forward scalar critic with hand-rolled backpropagation and Adam.

The critic maps a concatenated (parameter, data) vector to a single real
score. Three derivative paths are provided: gradients with respect to every
weight and bias, and gradients with respect to the data input (needed to
push design gradients through the sampling path). All arithmetic is float64
and the rectifier subgradient at zero is fixed to zero, so every operation
is deterministic and testable against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError, NumericalError


@dataclass(frozen=True)
class NetworkConfig:
    """Critic architecture: input split, hidden widths, activation, init seed.

    The input dimension is ``input_dim_theta + input_dim_y``; the output is
    always a single scalar. A rectifier follows each hidden affine map; the
    output layer is affine.
    """

    input_dim_theta: int
    input_dim_y: int
    hidden_layer_sizes: tuple[int, ...]
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "hidden_layer_sizes", tuple(int(h) for h in self.hidden_layer_sizes)
        )
        if self.input_dim_theta < 1:
            raise ConfigurationError(f"input_dim_theta must be >= 1, got {self.input_dim_theta}")
        if self.input_dim_y < 1:
            raise ConfigurationError(f"input_dim_y must be >= 1, got {self.input_dim_y}")
        if len(self.hidden_layer_sizes) < 1:
            raise ConfigurationError("at least one hidden layer is required")
        if any(h < 1 for h in self.hidden_layer_sizes):
            raise ConfigurationError(f"hidden sizes must be >= 1, got {self.hidden_layer_sizes}")
        if self.activation != "relu":
            raise ConfigurationError(f"unsupported activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.input_dim_theta + self.input_dim_y

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layer_sizes, 1)


class Network:
    """Critic parameters: weights[l] has shape (fan_in, fan_out), biases[l] (fan_out,)."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray], config: NetworkConfig):
        dims = config.layer_dims
        if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
            raise ConfigurationError("layer count does not match the configuration")
        for l, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (dims[l], dims[l + 1]) or b.shape != (dims[l + 1],):
                raise ConfigurationError(
                    f"layer {l} shapes {w.shape}/{b.shape} do not chain "
                    f"{dims[l]} -> {dims[l + 1]}"
                )
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.config = config

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list, interleaved [W0, b0, W1, b1, ...]."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_parameters(self, params: list[np.ndarray]) -> None:
        if len(params) != 2 * self.n_layers:
            raise InputError(f"expected {2 * self.n_layers} parameter arrays, got {len(params)}")
        for l in range(self.n_layers):
            w, b = params[2 * l], params[2 * l + 1]
            if w.shape != self.weights[l].shape or b.shape != self.biases[l].shape:
                raise InputError(f"parameter shapes changed at layer {l}")
            self.weights[l] = w
            self.biases[l] = b

    def copy(self) -> "Network":
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.config)


def init_network(config: NetworkConfig) -> Network:
    """Create a network with fan-in-scaled uniform weights and zero biases.

    Weights of a layer with fan-in f are drawn i.i.d. from U(-1/sqrt(f),
    1/sqrt(f)) (std 1/sqrt(3 f)), which keeps early critic outputs O(1) so
    the exponential term of the bound cannot overflow at initialization.
    Deterministic given ``config.seed``.
    """
    rng = np.random.default_rng(config.seed)
    dims = config.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(weights, biases, config)


def _stack_inputs(net: Network, theta, y) -> tuple[np.ndarray, bool]:
    """Validate and concatenate inputs; returns (X of shape (N, din), was_1d)."""
    th = np.asarray(theta, dtype=np.float64)
    yy = np.asarray(y, dtype=np.float64)
    single = th.ndim == 1 and yy.ndim == 1
    th = np.atleast_2d(th)
    yy = np.atleast_2d(yy)
    cfg = net.config
    if th.shape[1] != cfg.input_dim_theta:
        raise InputError(f"theta has dim {th.shape[1]}, expected {cfg.input_dim_theta}")
    if yy.shape[1] != cfg.input_dim_y:
        raise InputError(f"y has dim {yy.shape[1]}, expected {cfg.input_dim_y}")
    if th.shape[0] != yy.shape[0]:
        raise InputError(f"batch sizes differ: {th.shape[0]} vs {yy.shape[0]}")
    return np.concatenate([th, yy], axis=1), single


def _forward_cached(net: Network, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass on a (N, din) batch; returns scores (N,) and activations.

    The returned list holds the input followed by every rectified hidden
    output — exactly what the backward pass needs.
    """
    acts = [x]
    h = x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    out = h @ net.weights[-1] + net.biases[-1]
    return out[:, 0], acts


def _backward_batch(
    net: Network,
    acts: list[np.ndarray],
    out_weights: np.ndarray,
    need_params: bool = True,
    need_inputs: bool = False,
):
    """Backpropagate sum_i out_weights[i] * T(x_i) through the cached pass.

    Returns (param_grads, input_grads): param_grads is the flat list matching
    ``Network.parameters`` (summed over the batch, weights included);
    input_grads has shape (N, din) with row i equal to
    out_weights[i] * dT/dx(x_i).
    """
    n_layers = net.n_layers
    g = out_weights[:, None]
    param_grads = [None] * (2 * n_layers) if need_params else None
    for l in range(n_layers - 1, -1, -1):
        d = g if l == n_layers - 1 else g * (acts[l + 1] > 0)
        if need_params:
            param_grads[2 * l] = acts[l].T @ d
            param_grads[2 * l + 1] = d.sum(axis=0)
        if l > 0 or need_inputs:
            g = d @ net.weights[l].T
    input_grads = g if need_inputs else None
    return param_grads, input_grads


class PassWorkspace:
    """Preallocated buffers for repeated fixed-shape forward/backward passes.

    Training evaluates the same-shaped batch thousands of times; allocating
    the (rows x hidden) intermediates each epoch costs more in page faults
    than the arithmetic itself on typical batch sizes. Fill ``x`` (callers
    may slice-assign), call ``forward``, then ``backward`` with per-row
    output weights. Returned arrays are views into the workspace and are
    overwritten by the next pass.
    """

    def __init__(self, config: NetworkConfig, n_rows: int):
        dims = config.layer_dims
        self.config = config
        self.n_rows = n_rows
        self.x = np.empty((n_rows, dims[0]))
        self.hidden = [np.empty((n_rows, h)) for h in dims[1:-1]]
        self.masks = [np.empty((n_rows, h), dtype=bool) for h in dims[1:-1]]
        self.out = np.empty((n_rows, 1))
        self.deltas = [np.empty((n_rows, h)) for h in dims[1:-1]]
        self.input_grads = np.empty((n_rows, dims[0]))
        self.param_grads = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            self.param_grads.append(np.empty((fan_in, fan_out)))
            self.param_grads.append(np.empty(fan_out))

    def forward(self, net: Network) -> np.ndarray:
        """Scores (n_rows,) for the rows currently in ``x``; view into ``out``."""
        if net.config.layer_dims != self.config.layer_dims:
            raise InputError("workspace shaped for a different architecture")
        h = self.x
        for a, w, b in zip(self.hidden, net.weights[:-1], net.biases[:-1]):
            np.matmul(h, w, out=a)
            a += b
            np.maximum(a, 0.0, out=a)
            h = a
        np.matmul(h, net.weights[-1], out=self.out)
        self.out += net.biases[-1]
        return self.out[:, 0]

    def backward(self, net: Network, out_weights: np.ndarray,
                 need_params: bool = True, need_inputs: bool = False):
        """Weighted backward pass over the cached forward state.

        Same contract as the allocating path: summed parameter gradients in
        ``parameters()`` order, per-row weighted input gradients.
        """
        n_layers = net.n_layers
        grads = self.param_grads if need_params else None
        cur = out_weights[:, None]
        for l in range(n_layers - 1, -1, -1):
            if l < n_layers - 1:
                np.greater(self.hidden[l], 0.0, out=self.masks[l])
                np.multiply(cur, self.masks[l], out=cur)
            if need_params:
                below = self.hidden[l - 1] if l > 0 else self.x
                np.matmul(below.T, cur, out=grads[2 * l])
                np.sum(cur, axis=0, out=grads[2 * l + 1])
            if l > 0:
                np.matmul(cur, net.weights[l].T, out=self.deltas[l - 1])
                cur = self.deltas[l - 1]
            elif need_inputs:
                np.matmul(cur, net.weights[0].T, out=self.input_grads)
        return grads, (self.input_grads if need_inputs else None)


def forward(net: Network, theta, y):
    """Critic score T(theta, y); scalar for 1-D inputs, (N,) for batches."""
    x, single = _stack_inputs(net, theta, y)
    t, _ = _forward_cached(net, x)
    return float(t[0]) if single else t


def backward_params(net: Network, theta, y) -> list[np.ndarray]:
    """Gradient of the scalar critic output w.r.t. every weight and bias."""
    x, single = _stack_inputs(net, theta, y)
    if not single and x.shape[0] != 1:
        raise InputError("backward_params expects a single (theta, y) pair")
    _, acts = _forward_cached(net, x)
    grads, _ = _backward_batch(net, acts, np.ones(1), need_params=True)
    return grads


def backward_input_y(net: Network, theta, y) -> np.ndarray:
    """Gradient of the critic output w.r.t. the data input y."""
    x, single = _stack_inputs(net, theta, y)
    if not single and x.shape[0] != 1:
        raise InputError("backward_input_y expects a single (theta, y) pair")
    _, acts = _forward_cached(net, x)
    _, ig = _backward_batch(net, acts, np.ones(1), need_params=False, need_inputs=True)
    return ig[0, net.config.input_dim_theta:]


@dataclass
class AdamState:
    """Adam moment accumulators; shapes mirror the parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    rate: float,
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam ascent step: parameters move along +grad to increase the objective.

    Standard moment updates with bias correction. Pure: returns fresh
    parameter arrays and a fresh state with the step counter incremented.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InputError("params/grads/state lengths disagree")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient entries in parameter block {i}")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        step = rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m.append(m)
        new_v.append(v)
        new_p.append(p + step)
    new_state = AdamState(new_m, new_v, t, b1, b2, state.eps)
    return new_p, new_state


@dataclass(frozen=True)
class LrSchedule:
    """Multiplicative step schedule: rate(e) = initial * multiplier^(e // period)."""

    initial_rate: float
    multiplier: float = 1.0
    period: int = 1

    def __post_init__(self):
        if self.initial_rate < 0:
            raise ConfigurationError(f"initial_rate must be >= 0, got {self.initial_rate}")
        if not 0.0 < self.multiplier <= 1.0:
            raise ConfigurationError(f"multiplier must be in (0, 1], got {self.multiplier}")
        if self.period < 1:
            raise ConfigurationError(f"period must be >= 1, got {self.period}")


def schedule_rate(s: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise InputError(f"epoch must be >= 0, got {epoch}")
    return s.initial_rate * s.multiplier ** (epoch // s.period)
