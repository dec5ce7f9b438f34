"""Training loop with validation-loss checkpoint selection."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .config import RunConfig
from .data import AffineAugmentConfig, Dataset, augment_flat, batches
from .errors import ContractError, DivergenceError
from .nn import OptimizerState, WsdSchedule, adam_step, wsd_multiplier
from .objectives import CONTRASTIVE, ModelBundle, build_model, minibatch_loss

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "lr_mult", "total", "recon", "contrastive", "latent_entropy_terms", "kl", "val_loss", "val_recon")


@dataclass
class TrainResult:
    model: ModelBundle  # final parameters
    best_model: ModelBundle
    best_step: int
    best_val: float
    final_val: float
    final_val_recon: float = float("nan")  # mean Bernoulli NLL on the val split, final parameters
    history: list = field(default_factory=list)
    best_path: Path | None = None
    final_path: Path | None = None


def validation_breakdown(model: ModelBundle, x_val: np.ndarray, batch_size: int, seed: int) -> dict:
    """Mean loss terms over fixed val chunks with fixed noise (no augmentation)."""
    n = len(x_val)
    b = min(batch_size, n)
    if model.variant in CONTRASTIVE:
        b = max(b, 2)
    rng = np.random.default_rng([seed, 2])
    noise = rng.standard_normal((n, model.latent_dim))
    pos_noise = rng.standard_normal((n, model.latent_dim))
    parts = []
    for start in range(0, n - b + 1, b):
        sl = slice(start, start + b)
        xv = x_val[sl]
        lb, _ = minibatch_loss(model, xv, noise[sl], xv, pos_noise[sl], need_grad=False)
        parts.append((lb.total, lb.recon))
    if not parts:
        raise ContractError("validation split smaller than one batch")
    total, recon = np.mean(parts, axis=0)
    return {"total": float(total), "recon": float(recon)}


def validation_loss(model: ModelBundle, x_val: np.ndarray, batch_size: int, seed: int) -> float:
    return validation_breakdown(model, x_val, batch_size, seed)["total"]


def train(config: RunConfig, dataset: Dataset, out_dir=None) -> TrainResult:
    config.validate()
    if config.variant in CONTRASTIVE and config.batch_size < 2:
        raise ContractError("contrastive variants need batch_size >= 2")
    model = build_model(
        config.variant, dataset.input_dim, config.latent_dim, np.random.default_rng([config.seed, 0]),
        hidden=config.hidden, tau=config.tau, activation=config.activation,
    )
    params = model.params()
    opt = OptimizerState.for_params(params, base_lr=config.lr)
    sched = WsdSchedule(config.total_steps)
    rng = np.random.default_rng([config.seed, 1])
    aug = AffineAugmentConfig()
    side = dataset.image_side
    x_all = dataset.images
    x_val = dataset.part("val")[0]
    d = config.latent_dim

    best_val, best_step, best_model = np.inf, 0, model.copy()
    history = []
    last_val = last_recon = np.nan
    step, epoch = 0, 0
    while step < config.total_steps:
        blocks = batches(dataset.splits["train"], config.batch_size, config.seed, epoch)
        if not blocks:
            raise ContractError("training split smaller than one batch")
        for idx in blocks:
            step += 1
            x = x_all[idx]
            if config.augment:
                x = augment_flat(x, side, aug, rng)
            noise = rng.standard_normal((len(idx), d))
            xp, noise_p = None, None
            if config.variant == "InfoNCE":
                xp = augment_flat(x_all[idx], side, aug, rng)
                noise_p = rng.standard_normal((len(idx), d))
            try:
                lb, grads = minibatch_loss(model, x, noise, xp, noise_p)
                mult = wsd_multiplier(sched, step)
                adam_step(opt, params, grads, mult)
            except DivergenceError as exc:
                raise DivergenceError(f"diverged at step {step}: {exc}", step=step) from exc
            row = {"step": step, "lr_mult": mult, "total": lb.total, "recon": lb.recon,
                   "contrastive": lb.contrastive, "latent_entropy_terms": lb.latent_entropy_terms,
                   "kl": lb.kl, "val_loss": "", "val_recon": ""}
            if step % config.val_interval == 0 or step == config.total_steps:
                vb = validation_breakdown(model, x_val, config.batch_size, config.seed)
                last_val, last_recon = vb["total"], vb["recon"]
                row["val_loss"], row["val_recon"] = last_val, last_recon
                if last_val < best_val:
                    best_val, best_step, best_model = last_val, step, model.copy()
            history.append(row)
            if step >= config.total_steps:
                break
        epoch += 1

    result = TrainResult(model, best_model, best_step, float(best_val), float(last_val), float(last_recon), history)
    if out_dir is not None:
        write_outputs(result, config, dataset, Path(out_dir))
    return result


def checkpoint_meta(config: RunConfig, dataset: Dataset, step: int, val: float) -> dict:
    return {
        "model": config.variant,
        "dataset": dataset.name,
        "batch_size": config.batch_size,
        "seed": config.seed,
        "step": step,
        "val_loss": val,
        "hidden": list(config.hidden),
    }


def write_outputs(result: TrainResult, config: RunConfig, dataset: Dataset, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    # where the run was written is not part of the run; keep config.ini location-independent
    default_out = next(f.default for f in fields(RunConfig) if f.name == "out_dir")
    (out / "config.ini").write_text(replace(config, out_dir=default_out).to_text())
    result.best_path = save_checkpoint(
        out / "best.cmm", result.best_model, checkpoint_meta(config, dataset, result.best_step, result.best_val)
    )
    result.final_path = save_checkpoint(
        out / "final.cmm", result.model, checkpoint_meta(config, dataset, config.total_steps, result.final_val)
    )
    with open(out / "train_log.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, LOG_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in result.history:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
