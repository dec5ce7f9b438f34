"""Scalar and vector primitives used by every objective.

All arithmetic is float64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError


@dataclass(frozen=True)
class SimilarityConfig:
    tau: float = 0.1

    def __post_init__(self):
        if not self.tau > 0:
            raise ContractError(f"temperature must be positive, got {self.tau}")


@dataclass(frozen=True)
class ConcentrationQuery:
    """Deviation query for the in-batch mean of exp(cos/tau) over negatives."""

    tau: float
    num_negatives: int
    epsilon: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ContractError("tau must be positive")
        if int(self.num_negatives) != self.num_negatives or self.num_negatives < 1:
            raise ContractError("num_negatives must be an integer >= 1")
        if not self.epsilon > 0:
            raise ContractError("epsilon must be positive")


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DomainError("cosine similarity of a zero-norm vector is undefined")
    c = float(a @ b) / (na * nb)
    return min(1.0, max(-1.0, c))


def normalize_rows(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (unit rows, row norms); zero rows raise DomainError."""
    z = np.asarray(z, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", z, z))
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DomainError(f"row {bad} has zero norm (collapsed latent)")
    return z / norms[:, None], norms


def log_mean_exp(values, axis=None):
    """log(mean(exp(values))) with a max shift.

    With ``axis=None`` the input must be a nonempty vector and a float is
    returned; otherwise the reduction runs along ``axis``.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DomainError("log_mean_exp of an empty vector")
    if axis is None:
        m = v.max()
        if not np.isfinite(m):
            return float(m)
        return float(m + np.log(np.mean(np.exp(v - m))))
    m = v.max(axis=axis, keepdims=True)
    out = m + np.log(np.mean(np.exp(v - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def log_sum_exp(values, axis=None):
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DomainError("log_sum_exp of an empty vector")
    m = v.max(axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True))
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softplus(x):
    """log(1 + exp(x)), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def exp_sim_range(tau: float) -> float:
    """Width of the interval [e^{-1/tau}, e^{1/tau}] holding exp(cos/tau)."""
    return math.exp(1.0 / tau) - math.exp(-1.0 / tau)


def hoeffding_bound(q: ConcentrationQuery) -> float:
    """Two-sided Hoeffding bound on the deviation of the negative mean.

    Clipped at 2 to match the vacuous regime of the unclipped formula.
    """
    width = exp_sim_range(q.tau)
    val = 2.0 * math.exp(-2.0 * q.num_negatives * q.epsilon**2 / width**2)
    return min(val, 2.0)


# --- Monte-Carlo helpers for the concentration check -----------------------


def sample_anchor_cosines(rng: np.random.Generator, shape, dim: int) -> np.ndarray:
    """Cosines between a fixed anchor and i.i.d. uniform unit vectors in R^dim.

    By rotational symmetry the anchor can be taken as e_1, so the cosine is
    the first coordinate of a normalized Gaussian vector.
    """
    g = rng.standard_normal(tuple(np.atleast_1d(shape)) + (dim,))
    return g[..., 0] / np.linalg.norm(g, axis=-1)


def negative_mean_samples(
    tau: float, num_negatives: int, trials: int, rng: np.random.Generator, dim: int = 3
) -> np.ndarray:
    """`trials` draws of (1/(B-1)) sum_j exp(cos(z_i, z_j)/tau)."""
    out = np.empty(trials)
    chunk = max(1, 2_000_000 // max(num_negatives, 1))
    for start in range(0, trials, chunk):
        n = min(chunk, trials - start)
        c = sample_anchor_cosines(rng, (n, num_negatives), dim)
        out[start : start + n] = np.exp(c / tau).mean(axis=1)
    return out


def reference_mean(tau: float, rng: np.random.Generator, draws: int = 1_000_000, dim: int = 3) -> float:
    c = sample_anchor_cosines(rng, draws, dim)
    return float(np.exp(c / tau).mean())
