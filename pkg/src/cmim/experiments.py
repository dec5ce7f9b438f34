"""Orchestration shared by the CLI and the acceptance suite."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import Dataset
from .evaluation import (
    CLASSIFIERS,
    EMBEDDING_KINDS,
    EvalRow,
    SlopeStats,
    batch_size_slope,
    embed,
    fill_zscores_and_ranks,
    run_probe,
    slopes_ttest,
)
from .objectives import ModelBundle
from .train import train

log = logging.getLogger(__name__)


def settings_for(model: ModelBundle) -> list[tuple[str, str]]:
    """(classifier, embedding_kind) grid; decoderless models lose the informative half."""
    kinds = EMBEDDING_KINDS if model.has_decoder else ("mean_encoding",)
    return [(c, k) for k in kinds for c in CLASSIFIERS]


def evaluate_model(model: ModelBundle, dataset: Dataset, seed: int = 0) -> dict:
    """Accuracy per (classifier, embedding_kind): probes fit on train, scored on test."""
    xtr, ytr = dataset.part("train")
    xte, yte = dataset.part("test")
    out = {}
    cache = {}
    for clf, kind in settings_for(model):
        if kind not in cache:
            cache[kind] = (embed(model, xtr, kind).vectors, embed(model, xte, kind).vectors)
        etr, ete = cache[kind]
        out[(clf, kind)] = run_probe(clf, etr, ytr, ete, yte, seed)
    return out


def run_name(variant: str, batch_size: int, seed: int) -> str:
    return f"{variant}_b{batch_size}_s{seed}"


def eval_rows(name: str, model: ModelBundle, batch_size: int, dataset: Dataset, seed: int = 0) -> list[EvalRow]:
    acc = evaluate_model(model, dataset, seed)
    return [
        EvalRow(name, model.variant, batch_size, dataset.name, clf, kind, a)
        for (clf, kind), a in acc.items()
    ]


@dataclass
class GridSpec:
    variants: tuple
    datasets: tuple  # Dataset objects
    batch_sizes: tuple
    seeds: tuple
    base: RunConfig


@dataclass(frozen=True)
class RunSummary:
    dataset: str
    variant: str
    batch_size: int
    seed: int
    best_step: int
    best_val: float
    final_val: float
    final_val_recon: float


def run_grid(spec: GridSpec, out_dir=None, progress=None, summaries=None) -> list[EvalRow]:
    """Train every (dataset, variant, batch size, seed) cell and evaluate its best checkpoint.

    If ``summaries`` is a list, one RunSummary per cell is appended to it.
    """
    rows: list[EvalRow] = []
    for ds in spec.datasets:
        for variant in spec.variants:
            for b in spec.batch_sizes:
                for seed in spec.seeds:
                    cfg = spec.base.replace(variant=variant, batch_size=b, seed=seed, dataset=ds.name)
                    name = run_name(variant, b, seed)
                    target = None if out_dir is None else Path(out_dir) / ds.name / name
                    res = train(cfg, ds, target)
                    rows.extend(eval_rows(name, res.best_model, b, ds, seed))
                    if summaries is not None:
                        summaries.append(RunSummary(ds.name, variant, b, seed, res.best_step, res.best_val,
                                                    res.final_val, res.final_val_recon))
                    if progress:
                        progress(f"{ds.name} {name} best_step={res.best_step} val={res.best_val:.4f}")
    return fill_zscores_and_ranks(rows)


def setting_label(classifier: str, kind: str) -> str:
    return f"{classifier}/{kind}"


def slope_stats(rows: list[EvalRow], settings=None) -> dict[str, SlopeStats]:
    """Per variant: one z-vs-batch-size slope per (dataset, setting), pooled over seeds, then a t-test.

    ``settings`` optionally restricts to a set of (classifier, embedding_kind).
    """
    groups: dict = {}
    for r in rows:
        if settings is not None and (r.classifier, r.embedding_kind) not in settings:
            continue
        key = (r.variant, setting_label(r.classifier, r.embedding_kind), r.dataset)
        groups.setdefault(key, []).append((r.batch_size, r.z))
    by_variant: dict = {}
    for (variant, setting, dataset), pts in sorted(groups.items()):
        slope = batch_size_slope(pts)
        by_variant.setdefault(variant, ([], []))
        by_variant[variant][0].append(slope)
        by_variant[variant][1].append((variant, setting, dataset))
    return {v: slopes_ttest(s, labels) for v, (s, labels) in by_variant.items()}


def mean_z(rows: list[EvalRow], variant: str, kinds=None) -> float:
    zs = [r.z for r in rows if r.variant == variant and (kinds is None or r.embedding_kind in kinds)]
    return float(np.mean(zs))


def mean_accuracy(rows: list[EvalRow], variant: str, kind: str) -> float:
    return float(np.mean([r.accuracy for r in rows if r.variant == variant and r.embedding_kind == kind]))


def mean_final_recon(summaries, variant: str) -> float:
    """Seed- and batch-size-mean of the final validation reconstruction NLL."""
    return float(np.mean([s.final_val_recon for s in summaries if s.variant == variant]))
