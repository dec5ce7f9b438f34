"""CMM1 checkpoint files.

Layout: ASCII ``CMM1``, a little-endian uint32 byte length, that many bytes of
UTF-8 JSON metadata, then every parameter array as little-endian float64 in
``ModelBundle.params()`` order.  Layer shapes and activations live in the
metadata so a model can be rebuilt without its config.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .nn import DenseNet, Layer
from .numerics import SimilarityConfig
from .objectives import ModelBundle

MAGIC = b"CMM1"


def _net_meta(net: DenseNet | None):
    if net is None:
        return None
    return [{"shape": list(l.weight.shape), "activation": l.activation} for l in net.layers]


def encode_checkpoint(model: ModelBundle, meta: dict) -> bytes:
    doc = dict(meta)
    doc.update(
        variant=model.variant,
        latent_dim=model.latent_dim,
        input_dim=model.input_dim,
        tau=model.sim_config.tau,
        encoder=_net_meta(model.encoder),
        decoder=_net_meta(model.decoder),
    )
    text = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.params())
    return MAGIC + struct.pack("<I", len(text)) + text + body


def save_checkpoint(path, model: ModelBundle, meta: dict) -> Path:
    path = Path(path)
    path.write_bytes(encode_checkpoint(model, meta))
    return path


def _take_net(spec, buf, offset):
    if spec is None:
        return None, offset
    layers = []
    for entry in spec:
        fi, fo = entry["shape"]
        w = np.frombuffer(buf, "<f8", fi * fo, offset).reshape(fi, fo).astype(np.float64)
        offset += 8 * fi * fo
        b = np.frombuffer(buf, "<f8", fo, offset).astype(np.float64)
        offset += 8 * fo
        layers.append(Layer(w, b, entry["activation"]))
    return DenseNet(layers), offset


def decode_checkpoint(buf: bytes) -> tuple[ModelBundle, dict]:
    if buf[:4] != MAGIC:
        raise DataError("not a CMM1 checkpoint")
    (n,) = struct.unpack("<I", buf[4:8])
    meta = json.loads(buf[8 : 8 + n].decode("utf-8"))
    offset = 8 + n
    try:
        enc, offset = _take_net(meta["encoder"], buf, offset)
        dec, offset = _take_net(meta["decoder"], buf, offset)
    except ValueError as exc:
        raise DataError(f"truncated checkpoint: {exc}") from exc
    if offset != len(buf):
        raise DataError("checkpoint has trailing bytes")
    model = ModelBundle(enc, dec, meta["variant"], SimilarityConfig(meta["tau"]), meta["latent_dim"])
    return model, meta


def load_checkpoint(path) -> tuple[ModelBundle, dict]:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(buf)
