"""Training objectives: cMIM, MIM, VAE, AE, InfoNCE and the ablations.

Every loss function returns ``(LossBreakdown, grads)`` where ``grads`` is
aligned with ``ModelBundle.params()`` (None when ``need_grad=False``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contrastive import cross_view_infonce, latent_contrastive
from .errors import ContractError, DivergenceError
from .nn import (
    BernoulliLikelihood,
    DenseNet,
    GaussianPosterior,
    backward,
    bernoulli_logprob,
    bernoulli_logprob_grad,
    forward,
    gaussian_kl_to_standard,
    gaussian_logprob,
    gaussian_logprob_grads,
    mlp,
    standard_normal_logprob,
)
from .numerics import SimilarityConfig

VARIANTS = ("cMIM", "MIM", "VAE", "AE", "InfoNCE", "cMIM_sum", "InfoNCE_X", "cAE", "cVAE")
DECODERLESS = ("InfoNCE", "InfoNCE_X")
CONTRASTIVE = ("cMIM", "cMIM_sum", "cAE", "cVAE", "InfoNCE", "InfoNCE_X")


@dataclass
class ModelBundle:
    encoder: DenseNet  # emits [mean | raw log_var], width 2 * latent_dim
    decoder: DenseNet | None  # emits Bernoulli logits
    variant: str
    sim_config: SimilarityConfig
    latent_dim: int

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}")
        if self.encoder.output_dim != 2 * self.latent_dim:
            raise ContractError("encoder width does not match 2 * latent_dim")
        if self.variant in DECODERLESS:
            if self.decoder is not None:
                raise ContractError(f"{self.variant} carries no decoder")
        else:
            if self.decoder is None:
                raise ContractError(f"{self.variant} needs a decoder")
            if self.decoder.input_dim != self.latent_dim:
                raise ContractError("decoder input does not match latent_dim")

    @property
    def has_decoder(self) -> bool:
        return self.decoder is not None

    @property
    def input_dim(self) -> int:
        return self.encoder.input_dim

    def params(self) -> list[np.ndarray]:
        p = self.encoder.params()
        if self.decoder is not None:
            p += self.decoder.params()
        return p

    def copy(self) -> "ModelBundle":
        return ModelBundle(
            self.encoder.copy(),
            None if self.decoder is None else self.decoder.copy(),
            self.variant,
            self.sim_config,
            self.latent_dim,
        )


def build_model(
    variant: str,
    input_dim: int,
    latent_dim: int,
    rng: np.random.Generator,
    hidden=(128, 128),
    tau: float = 0.1,
    activation: str = "tanh",
) -> ModelBundle:
    enc = mlp(input_dim, list(hidden), 2 * latent_dim, rng, activation)
    dec = None
    if variant not in DECODERLESS:
        dec = mlp(latent_dim, list(reversed(hidden)), input_dim, rng, activation)
    return ModelBundle(enc, dec, variant, SimilarityConfig(tau), latent_dim)


@dataclass
class LossBreakdown:
    total: float
    recon: float = 0.0  # mean Bernoulli NLL
    contrastive: float = 0.0  # mean -log p(k=1) (or InfoNCE)
    latent_entropy_terms: float = 0.0  # -1/2 mean(log q(z|x) + log P(z))
    kl: float = 0.0  # mean KL(q || P), unweighted
    kl_weight: float = 0.0

    def recombined(self) -> float:
        return self.recon + self.contrastive + self.latent_entropy_terms + self.kl_weight * self.kl


def encode(model: ModelBundle, x):
    out, tape = forward(model.encoder, x)
    d = model.latent_dim
    return GaussianPosterior(out[..., :d], out[..., d:]), tape


def _encoder_grads(model, tape, post, dmean, dlogvar):
    g = np.concatenate([dmean, dlogvar * post.clamp_mask], axis=-1)
    grads, _ = backward(model.encoder, tape, g)
    return grads


def _check_finite(total):
    if not np.isfinite(total):
        raise DivergenceError(f"non-finite loss {total}")


def _contrastive_kind(variant):
    return "sum" if variant == "cMIM_sum" else "mean"


def amim_minibatch_loss(model: ModelBundle, batch_x, noise, need_grad=True):
    """Empirical A-MIM loss; the contrastive term is present for cMIM and cMIM_sum."""
    if model.variant not in ("cMIM", "MIM", "cMIM_sum"):
        raise ContractError(f"amim loss does not apply to {model.variant}")
    x = np.asarray(batch_x, dtype=np.float64)
    b = x.shape[0]
    contrastive = model.variant != "MIM"
    if contrastive and b < 2:
        raise ContractError("contrastive variants need B >= 2")

    post, etape = encode(model, x)
    eps = np.asarray(noise, dtype=np.float64)
    z = post.mean + post.std * eps
    logits, dtape = forward(model.decoder, z)
    lik = BernoulliLikelihood(logits)

    recon = -float(np.mean(bernoulli_logprob(lik, x)))
    logq = gaussian_logprob(post, z)
    logp = standard_normal_logprob(z)
    ent = -0.5 * float(np.mean(logq + logp))
    contr, gz_c = 0.0, 0.0
    if contrastive:
        contr, gz_c = latent_contrastive(z, model.sim_config.tau, _contrastive_kind(model.variant))
    total = recon + contr + ent
    _check_finite(total)
    out = LossBreakdown(total=total, recon=recon, contrastive=contr, latent_entropy_terms=ent)
    if not need_grad:
        return out, None

    dec_grads, dz = backward(model.decoder, dtape, -bernoulli_logprob_grad(lik, x) / b)
    dz_q, dmean_q, dlv_q = gaussian_logprob_grads(post, z)
    dz = dz + gz_c - 0.5 / b * (dz_q - z)
    dmean = -0.5 / b * dmean_q + dz
    dlv = -0.5 / b * dlv_q + dz * 0.5 * (z - post.mean)
    return out, _encoder_grads(model, etape, post, dmean, dlv) + dec_grads


def vae_minibatch_loss(model: ModelBundle, batch_x, noise, need_grad=True):
    """beta-VAE with beta = 1/latent_dim; cVAE adds the cMIM contrastive term."""
    if model.variant not in ("VAE", "cVAE"):
        raise ContractError(f"vae loss does not apply to {model.variant}")
    x = np.asarray(batch_x, dtype=np.float64)
    b = x.shape[0]
    contrastive = model.variant == "cVAE"
    if contrastive and b < 2:
        raise ContractError("contrastive variants need B >= 2")
    beta = 1.0 / model.latent_dim

    post, etape = encode(model, x)
    eps = np.asarray(noise, dtype=np.float64)
    z = post.mean + post.std * eps
    logits, dtape = forward(model.decoder, z)
    lik = BernoulliLikelihood(logits)
    recon = -float(np.mean(bernoulli_logprob(lik, x)))
    kl = float(np.mean(gaussian_kl_to_standard(post)))
    contr, gz_c = 0.0, 0.0
    if contrastive:
        contr, gz_c = latent_contrastive(z, model.sim_config.tau, "mean")
    total = recon + beta * kl + contr
    _check_finite(total)
    out = LossBreakdown(total=total, recon=recon, contrastive=contr, kl=kl, kl_weight=beta)
    if not need_grad:
        return out, None

    dec_grads, dz = backward(model.decoder, dtape, -bernoulli_logprob_grad(lik, x) / b)
    dz = dz + gz_c
    dmean = beta / b * post.mean + dz
    dlv = beta / b * 0.5 * (np.exp(post.log_var) - 1.0) + dz * 0.5 * (z - post.mean)
    return out, _encoder_grads(model, etape, post, dmean, dlv) + dec_grads


def ae_minibatch_loss(model: ModelBundle, batch_x, need_grad=True):
    """Deterministic auto-encoder on posterior means (Bernoulli NLL)."""
    if model.variant not in ("AE", "cAE"):
        raise ContractError(f"ae loss does not apply to {model.variant}")
    x = np.asarray(batch_x, dtype=np.float64)
    b = x.shape[0]
    contrastive = model.variant == "cAE"
    if contrastive and b < 2:
        raise ContractError("contrastive variants need B >= 2")

    post, etape = encode(model, x)
    z = post.mean
    logits, dtape = forward(model.decoder, z)
    lik = BernoulliLikelihood(logits)
    recon = -float(np.mean(bernoulli_logprob(lik, x)))
    contr, gz_c = 0.0, 0.0
    if contrastive:
        contr, gz_c = latent_contrastive(z, model.sim_config.tau, "mean")
    total = recon + contr
    _check_finite(total)
    out = LossBreakdown(total=total, recon=recon, contrastive=contr)
    if not need_grad:
        return out, None

    dec_grads, dz = backward(model.decoder, dtape, -bernoulli_logprob_grad(lik, x) / b)
    dmean = dz + gz_c
    return out, _encoder_grads(model, etape, post, dmean, np.zeros_like(dmean)) + dec_grads


def infonce_minibatch_loss(
    model: ModelBundle, batch_x, augmented_x, noise, positive_noise=None, need_grad=True
):
    """Encoder-only InfoNCE.

    For InfoNCE the positive of anchor i is the encoding of ``augmented_x[i]``
    (sampled with ``positive_noise``, defaulting to ``noise``).  InfoNCE_X has
    no positive view: the sample's own latent plays that role, which makes
    the loss the sum-denominator self-contrast and ``augmented_x`` is ignored.
    """
    if model.variant not in DECODERLESS:
        raise ContractError(f"infonce loss does not apply to {model.variant}")
    x = np.asarray(batch_x, dtype=np.float64)
    b = x.shape[0]
    if b < 2:
        raise ContractError("InfoNCE needs B >= 2")
    tau = model.sim_config.tau
    eps = np.asarray(noise, dtype=np.float64)

    post, etape = encode(model, x)
    z = post.mean + post.std * eps
    if model.variant == "InfoNCE_X":
        loss, gz = latent_contrastive(z, tau, "sum")
        _check_finite(loss)
        out = LossBreakdown(total=loss, contrastive=loss)
        if not need_grad:
            return out, None
        return out, _encoder_grads(model, etape, post, gz, gz * 0.5 * (z - post.mean))

    eps_p = eps if positive_noise is None else np.asarray(positive_noise, dtype=np.float64)
    post_p, ptape = encode(model, augmented_x)
    zp = post_p.mean + post_p.std * eps_p
    loss, gz, gzp = cross_view_infonce(z, zp, tau)
    _check_finite(loss)
    out = LossBreakdown(total=loss, contrastive=loss)
    if not need_grad:
        return out, None
    ga = _encoder_grads(model, etape, post, gz, gz * 0.5 * (z - post.mean))
    gp = _encoder_grads(model, ptape, post_p, gzp, gzp * 0.5 * (zp - post_p.mean))
    return out, [a + c for a, c in zip(ga, gp)]


def minibatch_loss(model: ModelBundle, batch_x, noise, augmented_x=None, positive_noise=None, need_grad=True):
    """Dispatch on the model variant."""
    v = model.variant
    if v in ("cMIM", "MIM", "cMIM_sum"):
        return amim_minibatch_loss(model, batch_x, noise, need_grad)
    if v in ("VAE", "cVAE"):
        return vae_minibatch_loss(model, batch_x, noise, need_grad)
    if v in ("AE", "cAE"):
        return ae_minibatch_loss(model, batch_x, need_grad)
    if v == "InfoNCE" and augmented_x is None:
        raise ContractError("InfoNCE needs an augmented positive view")
    return infonce_minibatch_loss(model, batch_x, augmented_x, noise, positive_noise, need_grad)
