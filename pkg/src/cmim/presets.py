"""Named experiment scales.

``desk`` is what runs on one CPU in minutes; ``paper-shape`` keeps the full
grid shape (batch sizes, model roster, step budget) and is only practical on
larger hardware.  Every report header lists how the chosen preset departs
from that full protocol.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .config import RunConfig
from .errors import ConfigError


@dataclass(frozen=True)
class Preset:
    name: str
    batch_sizes: tuple
    sensitivity_variants: tuple
    downstream_variants: tuple
    datasets: tuple
    seeds: tuple
    total_steps: int
    latent_dim: int
    deviations: tuple = field(default_factory=tuple)

    def run_config(self, **kw) -> RunConfig:
        base = dict(
            total_steps=self.total_steps, latent_dim=self.latent_dim,
            val_interval=max(1, self.total_steps // 20), preset=self.name,
        )
        base.update(kw)
        return RunConfig(**base).validate()

    def header(self) -> str:
        lines = [f"# preset: {self.name}"]
        lines += [f"# deviation: {d}" for d in self.deviations]
        return "\n".join(lines)


DESK = Preset(
    name="desk",
    batch_sizes=(4, 16, 64),
    sensitivity_variants=("cMIM", "InfoNCE"),
    downstream_variants=("cMIM", "MIM"),
    datasets=("blobs0", "blobs1", "blobs2"),
    seeds=(0, 1, 2),
    total_steps=4000,
    latent_dim=8,
    deviations=(
        "batch sizes {4,16,64} instead of {2,5,10,100,200}",
        "4000 training steps instead of 1,000,000",
        "8-dimensional latents instead of 64",
        "synthetic 16x16 blob datasets instead of the MNIST family",
        "MLP encoder/decoder with hidden widths 128,128",
    ),
)

PAPER_SHAPE = Preset(
    name="paper-shape",
    batch_sizes=(2, 5, 10, 100, 200),
    sensitivity_variants=("cMIM", "MIM", "VAE", "AE", "InfoNCE"),
    downstream_variants=("cMIM", "MIM", "VAE", "AE", "InfoNCE"),
    datasets=("blobs0", "blobs1", "blobs2"),
    seeds=(0, 1, 2),
    total_steps=1_000_000,
    latent_dim=64,
    deviations=(
        "synthetic blob datasets unless a manifest of IDX files is supplied",
        "MLP encoder/decoder with hidden widths 128,128",
    ),
)

PRESETS = {p.name: p for p in (DESK, PAPER_SHAPE)}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
