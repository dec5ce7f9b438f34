"""Dense networks with hand-written backprop, distribution heads, Adam, WSD."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DivergenceError
from .numerics import sigmoid, softplus

LOG_VAR_FLOOR = math.log(1e-6)
LOG_2PI = math.log(2.0 * math.pi)

ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        if self.weight.shape[1] != self.bias.shape[0]:
            raise ContractError("bias does not match layer width")


@dataclass
class DenseNet:
    layers: list[Layer]

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ContractError("layer dimensions do not chain")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])


def init_dense(sizes, activations, rng: np.random.Generator) -> DenseNet:
    """Glorot-uniform weights, zero biases."""
    if len(activations) != len(sizes) - 1:
        raise ContractError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        a = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-a, a, size=(fan_in, fan_out))
        layers.append(Layer(w, np.zeros(fan_out), act))
    return DenseNet(layers)


def mlp(in_dim, hidden, out_dim, rng, activation="tanh") -> DenseNet:
    sizes = [in_dim, *hidden, out_dim]
    acts = [activation] * len(hidden) + ["identity"]
    return init_dense(sizes, acts, rng)


def _act(name, a):
    if name == "tanh":
        return np.tanh(a)
    if name == "relu":
        return np.maximum(a, 0.0)
    return a


def _act_grad(name, a, h, g):
    if name == "tanh":
        return g * (1.0 - h * h)
    if name == "relu":
        return g * (a > 0)
    return g


@dataclass
class Tape:
    inputs: list  # input to each layer
    pre: list  # pre-activations
    outputs: list  # post-activations
    squeeze: bool = False


def forward(net: DenseNet, x):
    """Returns (output, tape).  Accepts a vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != net.input_dim:
        raise ContractError(f"input has {h.shape[1]} features, net expects {net.input_dim}")
    tape = Tape([], [], [], squeeze)
    for layer in net.layers:
        tape.inputs.append(h)
        a = h @ layer.weight + layer.bias
        h = _act(layer.activation, a)
        tape.pre.append(a)
        tape.outputs.append(h)
    return (h[0] if squeeze else h), tape


def backward(net: DenseNet, tape: Tape, upstream):
    """Reverse-mode pass.  Returns (param grads aligned with net.params(), input grad)."""
    g = np.asarray(upstream, dtype=np.float64)
    if tape.squeeze:
        g = g[None, :]
    if len(tape.pre) != len(net.layers) or g.shape != tape.outputs[-1].shape:
        raise ContractError("tape does not match this network or upstream gradient")
    grads = [None] * (2 * len(net.layers))
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if tape.pre[k].shape[1] != layer.weight.shape[1]:
            raise ContractError("stale tape")
        g = _act_grad(layer.activation, tape.pre[k], tape.outputs[k], g)
        grads[2 * k] = tape.inputs[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ layer.weight.T
    return grads, (g[0] if tape.squeeze else g)


# --- distribution heads ----------------------------------------------------


@dataclass
class GaussianPosterior:
    """Diagonal Gaussian; log_var is floored at log(1e-6) on construction."""

    mean: np.ndarray
    log_var: np.ndarray
    clamp_mask: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        raw = np.asarray(self.log_var, dtype=np.float64)
        if raw.shape != self.mean.shape:
            raise ContractError("mean and log_var shapes differ")
        # mask is True where the raw value passes through (gradient flows)
        self.clamp_mask = raw > LOG_VAR_FLOOR
        self.log_var = np.maximum(raw, LOG_VAR_FLOOR)

    @property
    def std(self):
        return np.exp(0.5 * self.log_var)


@dataclass
class BernoulliLikelihood:
    logits: np.ndarray

    @property
    def probs(self):
        return sigmoid(self.logits)


def gaussian_logprob(p: GaussianPosterior, z) -> np.ndarray | float:
    """Sum over the last axis of the diagonal-Gaussian log density."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != p.mean.shape:
        raise ContractError("z and posterior shapes differ")
    quad = (z - p.mean) ** 2 * np.exp(-p.log_var)
    out = -0.5 * np.sum(LOG_2PI + p.log_var + quad, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def gaussian_logprob_grads(p: GaussianPosterior, z):
    """Partials of gaussian_logprob w.r.t. (z, mean, log_var), elementwise."""
    inv_var = np.exp(-p.log_var)
    diff = z - p.mean
    dz = -diff * inv_var
    dmean = -dz
    dlogvar = -0.5 + 0.5 * diff * diff * inv_var
    return dz, dmean, dlogvar


def standard_normal_logprob(z) -> np.ndarray | float:
    z = np.asarray(z, dtype=np.float64)
    out = -0.5 * np.sum(LOG_2PI + z * z, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def reparameterized_sample(p: GaussianPosterior, noise) -> np.ndarray:
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != p.mean.shape:
        raise ContractError("noise shape must match posterior")
    return p.mean + p.std * noise


def bernoulli_logprob(lik: BernoulliLikelihood, x) -> np.ndarray | float:
    """Sum over the last axis of x*l - softplus(l)."""
    l = np.asarray(lik.logits, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != l.shape:
        raise ContractError("x and logits shapes differ")
    out = np.sum(x * l - softplus(l), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def bernoulli_logprob_grad(lik: BernoulliLikelihood, x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) - lik.probs


def gaussian_kl_to_standard(p: GaussianPosterior) -> np.ndarray | float:
    """KL(N(mean, exp(log_var)) || N(0, I)), summed over the last axis."""
    out = 0.5 * np.sum(p.mean**2 + np.exp(p.log_var) - 1.0 - p.log_var, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


# --- optimization ----------------------------------------------------------


@dataclass
class OptimizerState:
    m: list
    v: list
    step: int = 0
    base_lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, base_lr=1e-3, **kw) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0, base_lr, **kw)


def adam_step(state: OptimizerState, params, grads, lr_multiplier: float = 1.0):
    """In-place Adam update with bias correction; returns (params, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError("params, grads and optimizer state disagree in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient", step=state.step)
    b1, b2 = state.betas
    state.step += 1
    t = state.step
    lr = state.base_lr * lr_multiplier
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise ContractError("gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if lr != 0.0:
            p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass(frozen=True)
class WsdSchedule:
    """Warmup-stable-decay multiplier with linear ramps."""

    total_steps: int
    warmup_frac: float = 0.10
    decay_frac: float = 0.10

    @property
    def warmup_steps(self) -> int:
        return int(round(self.warmup_frac * self.total_steps))

    @property
    def decay_steps(self) -> int:
        return int(round(self.decay_frac * self.total_steps))


def wsd_multiplier(s: WsdSchedule, step: int) -> float:
    if not 0 <= step <= s.total_steps:
        raise ContractError(f"step {step} outside [0, {s.total_steps}]")
    w, d, T = s.warmup_steps, s.decay_steps, s.total_steps
    if w > 0 and step < w:
        return step / w
    if d > 0 and step > T - d:
        return (T - step) / d
    return 1.0
