"""Matched-pair probability p(k=1), its loss and gradients, and InfoNCE.

Logits are s_ij = cos(z_i, z_j) / tau.  The positive for anchor i is its own
sampled latent, so s_ii = 1/tau exactly.  The negative term enters through a
log-mean-exp over j != i, which makes -log p(k=1) an InfoNCE cross-entropy
with the positive logit shifted by log(B-1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .numerics import SimilarityConfig, log_sum_exp, normalize_rows, sigmoid, softplus


@dataclass
class ContrastiveBatch:
    latents: np.ndarray
    config: SimilarityConfig

    def __post_init__(self):
        self.latents = np.asarray(self.latents, dtype=np.float64)
        if self.latents.ndim != 2:
            raise ContractError("latents must be a B x D matrix")
        if self.latents.shape[0] < 2:
            raise ContractError("contrastive batch needs B >= 2")
        # zero-norm rows raise DomainError here
        self._unit, self._norms = normalize_rows(self.latents)

    @property
    def size(self) -> int:
        return self.latents.shape[0]

    @property
    def tau(self) -> float:
        return self.config.tau

    def logits(self) -> np.ndarray:
        u = self._unit
        s = np.clip(u @ u.T, -1.0, 1.0) / self.tau
        np.fill_diagonal(s, 1.0 / self.tau)
        return s


@dataclass
class ContrastiveDiagnostics:
    logits: np.ndarray
    neg_log_mean: np.ndarray
    margin: np.ndarray
    p_match: np.ndarray
    loss: np.ndarray
    neg_weights: np.ndarray


def _negative_mask(b: int) -> np.ndarray:
    return ~np.eye(b, dtype=bool)


def _offdiag(s: np.ndarray) -> np.ndarray:
    """B x (B-1) matrix of off-diagonal entries, row order preserved."""
    b = s.shape[0]
    return s[_negative_mask(b)].reshape(b, b - 1)


def diagnostics_from_logits(s: np.ndarray) -> ContrastiveDiagnostics:
    s = np.asarray(s, dtype=np.float64)
    b = s.shape[0]
    if b < 2:
        raise ContractError("need B >= 2")
    neg = _offdiag(s)
    neg_lse = log_sum_exp(neg, axis=1)
    s_bar = neg_lse - math.log(b - 1)
    margin = np.diag(s) - s_bar
    p = sigmoid(margin)
    loss = softplus(-margin)
    pi = np.zeros_like(s)
    pi[_negative_mask(b)] = np.exp(neg - neg_lse[:, None]).ravel()
    return ContrastiveDiagnostics(
        logits=s,
        neg_log_mean=s_bar,
        margin=margin,
        p_match=np.atleast_1d(p),
        loss=np.atleast_1d(loss),
        neg_weights=pi,
    )


def cmim_diagnostics(batch: ContrastiveBatch) -> ContrastiveDiagnostics:
    return diagnostics_from_logits(batch.logits())


def logit_grad_from_diagnostics(d: ContrastiveDiagnostics) -> np.ndarray:
    """d(mean loss)/d s: diagonal (p-1)/B, off-diagonal (1-p) pi_ij / B."""
    b = d.logits.shape[0]
    g = (1.0 - d.p_match)[:, None] * d.neg_weights
    np.fill_diagonal(g, d.p_match - 1.0)
    return g / b


def latent_grad_from_logit_grad(batch: ContrastiveBatch, g: np.ndarray) -> np.ndarray:
    """Chain rule through s_ij = <u_i, u_j>/tau, u = z/|z|.

    Both arguments of every s_ij receive gradient.  The diagonal contributes
    nothing after projection since cos(z, z) is constant.
    """
    u, norms = batch._unit, batch._norms
    gu = (g + g.T) @ u / batch.tau
    radial = np.einsum("ij,ij->i", gu, u)
    return (gu - radial[:, None] * u) / norms[:, None]


def cmim_loss_and_grad(batch: ContrastiveBatch, return_latent_grad: bool = False):
    """Mean -log p(k=1) over anchors and its gradient w.r.t. the logits.

    With ``return_latent_grad`` a third value, the gradient w.r.t. the
    latents, is returned.
    """
    d = cmim_diagnostics(batch)
    g = logit_grad_from_diagnostics(d)
    loss = float(np.mean(d.loss))
    if return_latent_grad:
        return loss, g, latent_grad_from_logit_grad(batch, g)
    return loss, g


def infonce_loss(anchor_logits) -> float:
    """B-way cross-entropy with the positive at index 0."""
    l = np.asarray(anchor_logits, dtype=np.float64)
    if l.ndim != 1 or l.size < 2:
        raise ContractError("InfoNCE needs at least 2 candidates")
    return log_sum_exp(l) - float(l[0])


def offset_logits(s: np.ndarray, i: int, offset: float) -> np.ndarray:
    """Row i rearranged as [s_ii + offset, s_ij for j != i]."""
    row = np.delete(s[i], i)
    return np.concatenate(([s[i, i] + offset], row))


def offset_equivalence(batch: ContrastiveBatch, offset: float | None = None) -> float:
    """Max |-log p(k=1) - InfoNCE(shifted positive)| over anchors.

    ``offset`` defaults to log(B-1); other values exist for mutation tests.
    """
    d = cmim_diagnostics(batch)
    b = batch.size
    off = math.log(b - 1) if offset is None else offset
    worst = 0.0
    for i in range(b):
        nce = infonce_loss(offset_logits(d.logits, i, off))
        worst = max(worst, abs(nce - d.loss[i]))
    return worst


def sum_variant_from_logits(s: np.ndarray) -> np.ndarray:
    """Per-anchor loss with the negative mean replaced by a sum."""
    return log_sum_exp(s, axis=1) - np.diag(s)


def cmim_sum_variant(batch: ContrastiveBatch) -> np.ndarray:
    return sum_variant_from_logits(batch.logits())


def sum_variant_loss_and_grad(batch: ContrastiveBatch, return_latent_grad: bool = False):
    s = batch.logits()
    b = batch.size
    lse = log_sum_exp(s, axis=1)
    per = lse - np.diag(s)
    g = np.exp(s - lse[:, None])
    g[np.diag_indices(b)] -= 1.0
    g /= b
    if return_latent_grad:
        return float(per.mean()), g, latent_grad_from_logit_grad(batch, g)
    return float(per.mean()), g


def cmim_latent_loss_grad_dense(z: np.ndarray, tau: float):
    """(mean loss, dloss/dz) for the mean-denominator loss in fewer passes.

    Cosine logits are bounded by 1/tau, so exp(s - 1/tau) lies in
    [e^{-2/tau}, 1] and a global shift replaces the per-row max.  The loss is
    still formed as softplus(-margin).
    """
    u, norms = normalize_rows(z)
    b = len(u)
    inv_tau = 1.0 / tau
    e = (u * inv_tau) @ u.T
    e -= inv_tau
    np.exp(e, out=e)
    np.fill_diagonal(e, 0.0)
    r = e.sum(axis=1)
    margin = -np.log(r / (b - 1))  # s_ii - s_bar_i with s_ii = 1/tau
    p = sigmoid(margin)
    loss = float(np.mean(softplus(-margin)))
    # d loss / d s_ij = c_i e_ij off the diagonal; e is symmetric, so both
    # directions of each pair come from one product against [u, c u]
    c = (1.0 - p) / (r * b)
    d = u.shape[1]
    both = e @ np.hstack([u, c[:, None] * u])
    gu = (c[:, None] * both[:, :d] + both[:, d:]) * inv_tau
    radial = np.einsum("ij,ij->i", gu, u)
    return loss, (gu - radial[:, None] * u) / norms[:, None]


def latent_contrastive(z: np.ndarray, tau: float, kind: str = "mean"):
    """(mean loss, dloss/dz) for a latent matrix; kind is 'mean' or 'sum'."""
    if kind == "mean":
        if len(z) < 2:
            raise ContractError("contrastive batch needs B >= 2")
        return cmim_latent_loss_grad_dense(np.asarray(z, dtype=np.float64), tau)
    if kind == "sum":
        batch = ContrastiveBatch(z, SimilarityConfig(tau))
        loss, _, gz = sum_variant_loss_and_grad(batch, return_latent_grad=True)
        return loss, gz
    raise ValueError(f"unknown contrastive kind {kind!r}")


def cross_view_infonce(anchors: np.ndarray, positives: np.ndarray, tau: float):
    """InfoNCE with augmented positives.

    Row i candidates: [sim(z_i, z_i+), sim(z_i, z_j) for j != i].  Returns
    (mean loss, d/d anchors, d/d positives).
    """
    a_batch = ContrastiveBatch(anchors, SimilarityConfig(tau))
    p_unit, p_norms = normalize_rows(positives)
    a_unit, a_norms = a_batch._unit, a_batch._norms
    b = a_batch.size
    s = a_batch.logits()
    pos = np.clip(np.einsum("ij,ij->i", a_unit, p_unit), -1.0, 1.0) / tau
    s[np.diag_indices(b)] = pos
    lse = log_sum_exp(s, axis=1)
    loss = float(np.mean(lse - pos))
    g = np.exp(s - lse[:, None])
    g[np.diag_indices(b)] -= 1.0
    g /= b
    gpos = np.diag(g).copy()
    goff = g.copy()
    np.fill_diagonal(goff, 0.0)
    # anchor-anchor part
    gu_a = (goff + goff.T) @ a_unit / tau + gpos[:, None] * p_unit / tau
    gu_p = gpos[:, None] * a_unit / tau

    def project(gu, u, n):
        r = np.einsum("ij,ij->i", gu, u)
        return (gu - r[:, None] * u) / n[:, None]

    return loss, project(gu_a, a_unit, a_norms), project(gu_p, p_unit, p_norms)
