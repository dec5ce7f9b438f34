"""Run configuration stored as a one-section INI document next to the outputs."""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

from .errors import ConfigError
from .objectives import VARIANTS

SECTION = "run"


@dataclass
class RunConfig:
    variant: str = "cMIM"
    dataset: str = "blobs0"  # synth name, "blobs<seed>", or a manifest row name
    manifest: str = ""
    latent_dim: int = 16
    hidden: tuple = (128, 128)
    activation: str = "tanh"
    batch_size: int = 16
    total_steps: int = 1500
    lr: float = 1e-3
    seed: int = 0
    tau: float = 0.1
    val_interval: int = 100
    augment: bool = True
    out_dir: str = "runs/default"
    preset: str = "desk"

    def validate(self) -> "RunConfig":
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.latent_dim < 1 or self.batch_size < 1 or self.total_steps < 1 or self.val_interval < 1:
            raise ConfigError("latent_dim, batch_size, total_steps and val_interval must be positive")
        if self.tau <= 0 or self.lr <= 0:
            raise ConfigError("tau and lr must be positive")
        if self.preset not in ("desk", "paper-shape"):
            raise ConfigError(f"unknown preset {self.preset!r}")
        return self

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw).validate()

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp[SECTION] = {f.name: _dump(getattr(self, f.name)) for f in dataclasses.fields(self)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        if SECTION not in cp:
            raise ConfigError(f"missing [{SECTION}] section")
        kw = {}
        known = {f.name: f for f in dataclasses.fields(cls)}
        for key, raw in cp[SECTION].items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = _load(known[key].default, raw, key)
        return cls(**kw).validate()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _dump(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _load(default, raw: str, key: str):
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
