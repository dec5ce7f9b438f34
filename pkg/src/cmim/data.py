"""Datasets: IDX files, synthetic blob images, the 2D toy set, augmentation, batching."""
from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

DATA_ROOT_ENV = "CMIM_DATA_ROOT"


# --- IDX container ---------------------------------------------------------


class IdxFormatError(DataError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedPayloadError(IdxFormatError):
    pass


class UnsupportedDtypeError(IdxFormatError):
    pass


IDX_DTYPES = {
    0x08: np.dtype("u1"),
    0x09: np.dtype("i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_DTYPE_CODES = {v.str.lstrip("<>|="): k for k, v in IDX_DTYPES.items()}


def parse_idx(buf: bytes) -> np.ndarray:
    if len(buf) < 4:
        raise TruncatedPayloadError("file shorter than the 4-byte magic")
    zero, code, rank = struct.unpack(">HBB", buf[:4])
    if zero != 0:
        raise BadMagicError(f"magic must start with two zero bytes, got {buf[:4].hex()}")
    if code not in IDX_DTYPES:
        raise UnsupportedDtypeError(f"unsupported IDX dtype code 0x{code:02x}")
    header = 4 + 4 * rank
    if len(buf) < header:
        raise TruncatedPayloadError("header ends before all dimensions")
    dims = struct.unpack(f">{rank}I", buf[4:header])
    dtype = IDX_DTYPES[code]
    count = math.prod(dims)
    need = header + count * dtype.itemsize
    if len(buf) < need:
        raise TruncatedPayloadError(f"payload has {len(buf) - header} bytes, expected {need - header}")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=header)
    return arr.reshape(dims).astype(dtype.newbyteorder("="))


def read_idx(path) -> np.ndarray:
    """Raw IDX tensor (no rescaling)."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return parse_idx(buf)


def idx_header(arr: np.ndarray) -> bytes:
    key = arr.dtype.str.lstrip("<>|=")
    if key not in _DTYPE_CODES:
        raise UnsupportedDtypeError(f"no IDX code for dtype {arr.dtype}")
    return struct.pack(">HBB", 0, _DTYPE_CODES[key], arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)


def write_idx(path, arr) -> None:
    arr = np.asarray(arr)
    code = _DTYPE_CODES.get(arr.dtype.str.lstrip("<>|="))
    if code is None:
        raise UnsupportedDtypeError(f"no IDX code for dtype {arr.dtype}")
    payload = np.ascontiguousarray(arr, dtype=IDX_DTYPES[code]).tobytes()
    Path(path).write_bytes(idx_header(arr) + payload)


def load_idx_images(path) -> np.ndarray:
    """Unsigned-byte image tensor rescaled to [0, 1]."""
    raw = read_idx(path)
    if raw.dtype != np.uint8:
        raise UnsupportedDtypeError("image files must hold unsigned bytes")
    return raw.astype(np.float64) / 255.0


# --- datasets --------------------------------------------------------------


@dataclass
class Dataset:
    images: np.ndarray  # N x D_x in [0, 1]
    labels: np.ndarray
    splits: dict  # name -> index array
    image_side: int
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        n = len(self.labels)
        seen = np.concatenate([np.asarray(v, dtype=np.int64) for v in self.splits.values()]) if self.splits else np.array([], np.int64)
        if len(seen) != n or len(np.unique(seen)) != n:
            raise DataError("splits must be disjoint and cover every sample")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError("labels outside [0, num_classes)")

    @property
    def input_dim(self) -> int:
        return self.images.shape[1]

    def part(self, split: str):
        idx = self.splits[split]
        return self.images[idx], self.labels[idx]


def split_indices(n: int, rng: np.random.Generator, test_frac=0.2, val_frac=0.05) -> dict:
    """Shuffle and carve test, then val as a fraction of the remaining train."""
    perm = rng.permutation(n)
    n_test = int(round(test_frac * n))
    rest = perm[n_test:]
    n_val = int(round(val_frac * len(rest)))
    return {
        "train": np.sort(rest[n_val:]),
        "val": np.sort(rest[:n_val]),
        "test": np.sort(perm[:n_test]),
    }


def _blob_field(side, centers, widths, amps):
    """Sum of isotropic Gaussians; centers (N, K, 2) as (row, col)."""
    grid = np.arange(side, dtype=np.float64)
    dy = grid[None, None, :, None] - centers[:, :, 0, None, None]
    dx = grid[None, None, None, :] - centers[:, :, 1, None, None]
    w = widths[:, :, None, None]
    g = amps[:, :, None, None] * np.exp(-(dy**2 + dx**2) / (2.0 * w**2))
    return g.sum(axis=1)


def synth_blobs(
    num_classes: int = 10,
    per_class: int = 100,
    image_side: int = 16,
    seed: int = 0,
    blobs_per_class: int = 3,
    jitter: float = 1.0,
    shift: int = 2,
    clutter: int = 1,
    noise: float = 0.1,
    name: str | None = None,
) -> Dataset:
    """Class-specific Gaussian-blob images with nuisance variation.

    Every class owns ``blobs_per_class`` blob centers.  Each sample jitters
    them, moves the whole pattern by up to ``shift`` pixels, adds ``clutter``
    class-independent blobs and clipped Gaussian pixel noise.
    """
    margin = 2.0 + shift
    if image_side < 8 or image_side - 1 < 2 * margin:
        raise DataError(f"image_side {image_side} too small for shift {shift}")
    rng = np.random.default_rng(seed)
    k = blobs_per_class
    proto_c = rng.uniform(margin, image_side - 1 - margin, size=(num_classes, k, 2))
    proto_w = rng.uniform(0.8, 2.0, size=(num_classes, k))
    proto_a = rng.uniform(0.6, 1.0, size=(num_classes, k))

    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes), per_class)
    offset = rng.integers(-shift, shift + 1, size=(n, 1, 2))
    centers = proto_c[labels] + offset + rng.normal(0.0, jitter, size=(n, k, 2))
    widths = proto_w[labels] * rng.uniform(0.8, 1.25, size=(n, k))
    amps = proto_a[labels] * rng.uniform(0.6, 1.0, size=(n, k))
    if clutter:
        centers = np.concatenate([centers, rng.uniform(0, image_side - 1, size=(n, clutter, 2))], axis=1)
        widths = np.concatenate([widths, rng.uniform(0.8, 2.0, size=(n, clutter))], axis=1)
        amps = np.concatenate([amps, rng.uniform(0.3, 0.8, size=(n, clutter))], axis=1)
    if n:
        img = _blob_field(image_side, centers, widths, amps)
        img = img + rng.normal(0.0, noise, size=img.shape)
        images = np.clip(img, 0.0, 1.0).reshape(n, image_side * image_side)
    else:
        images = np.zeros((0, image_side * image_side))
    splits = split_indices(n, rng)
    return Dataset(images, labels, splits, image_side, num_classes, name or f"blobs{seed}")


def idx_dataset(
    train_images, train_labels, test_images, test_labels,
    n_train=2000, n_val=None, n_test=1000, seed=0, name="idx",
) -> Dataset:
    """Subsampled IDX train/test pair; val is carved from train (5% by default)."""
    rng = np.random.default_rng(seed)
    xtr = load_idx_images(train_images)
    ytr = read_idx(train_labels).astype(np.int64)
    xte = load_idx_images(test_images)
    yte = read_idx(test_labels).astype(np.int64)
    if xtr.shape[1] != xtr.shape[2]:
        raise DataError("images must be square")
    side = xtr.shape[1]
    if n_val is None:
        n_val = int(round(0.05 * n_train))
    tr = rng.choice(len(ytr), size=min(n_train + n_val, len(ytr)), replace=False)
    te = rng.choice(len(yte), size=min(n_test, len(yte)), replace=False)
    images = np.concatenate([xtr[tr], xte[te]]).reshape(len(tr) + len(te), side * side)
    labels = np.concatenate([ytr[tr], yte[te]])
    ntr = len(tr) - n_val
    splits = {
        "train": np.arange(ntr),
        "val": np.arange(ntr, len(tr)),
        "test": np.arange(len(tr), len(tr) + len(te)),
    }
    return Dataset(images, labels, splits, side, int(labels.max()) + 1, name)


MANIFEST_COLUMNS = (
    "name", "source", "train_images", "train_labels", "test_images", "test_labels",
    "n_train", "n_val", "n_test", "seed",
)


@dataclass
class ManifestEntry:
    name: str
    source: str  # "synth" or "idx"
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    n_train: int = 0
    n_val: int = 0
    n_test: int = 0
    seed: int = 0


def read_manifest(path) -> list[ManifestEntry]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"manifest missing columns: {sorted(missing)}")
        out = []
        for row in reader:
            out.append(
                ManifestEntry(
                    row["name"], row["source"], row["train_images"], row["train_labels"],
                    row["test_images"], row["test_labels"], int(row["n_train"] or 0),
                    int(row["n_val"] or 0), int(row["n_test"] or 0), int(row["seed"] or 0),
                )
            )
    return out


def write_manifest(path, entries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for e in entries:
            w.writerow([getattr(e, c) for c in MANIFEST_COLUMNS])


def load_entry(entry: ManifestEntry, data_root=None) -> Dataset:
    if entry.source == "synth":
        return synth_dataset(entry.name, entry.seed)
    if entry.source == "idx":
        root = Path(data_root or os.environ.get(DATA_ROOT_ENV, "."))
        return idx_dataset(
            root / entry.train_images, root / entry.train_labels,
            root / entry.test_images, root / entry.test_labels,
            entry.n_train, entry.n_val or None, entry.n_test, entry.seed, entry.name,
        )
    raise DataError(f"unknown dataset source {entry.source!r}")


# desk roster parameters for synthetic datasets
SYNTH_DEFAULTS = dict(num_classes=10, per_class=300, image_side=16)


def synth_dataset(name: str, seed: int) -> Dataset:
    return synth_blobs(seed=seed, name=name, **SYNTH_DEFAULTS)


# --- augmentation ----------------------------------------------------------


@dataclass(frozen=True)
class AffineAugmentConfig:
    max_degrees: float = 15.0
    translate_frac: tuple = (0.1, 0.1)
    scale_range: tuple = (0.9, 1.1)
    max_shear: float = 10.0


@dataclass
class AffineParams:
    angle: np.ndarray  # degrees
    tx: np.ndarray  # pixels (columns)
    ty: np.ndarray  # pixels (rows)
    scale: np.ndarray
    shear: np.ndarray  # degrees, along x


def sample_affine(config: AffineAugmentConfig, side: int, n: int, rng: np.random.Generator) -> AffineParams:
    """Random parameters; translations are whole pixels."""
    angle = rng.uniform(-config.max_degrees, config.max_degrees, n)
    mx = config.translate_frac[0] * side
    my = config.translate_frac[1] * side
    tx = np.round(rng.uniform(-mx, mx, n))
    ty = np.round(rng.uniform(-my, my, n))
    scale = rng.uniform(config.scale_range[0], config.scale_range[1], n)
    shear = rng.uniform(-config.max_shear, config.max_shear, n)
    return AffineParams(angle, tx, ty, scale, shear)


def _forward_matrices(p: AffineParams) -> np.ndarray:
    """Per-image 2x2 linear part acting on (x, y) = (col, row)."""
    a = np.deg2rad(p.angle)
    sh = np.tan(np.deg2rad(p.shear))
    c, s = np.cos(a), np.sin(a)
    n = len(a)
    rot = np.empty((n, 2, 2))
    rot[:, 0, 0], rot[:, 0, 1], rot[:, 1, 0], rot[:, 1, 1] = c, -s, s, c
    shear = np.zeros((n, 2, 2))
    shear[:, 0, 0] = 1.0
    shear[:, 0, 1] = sh
    shear[:, 1, 1] = 1.0
    return (rot @ shear) * p.scale[:, None, None]


def apply_affine(images: np.ndarray, p: AffineParams) -> np.ndarray:
    """Inverse-map every output pixel and sample bilinearly with zero padding.

    ``images`` is (N, side, side).  The transform is about the image center.
    """
    n, h, w = images.shape
    inv = np.linalg.inv(_forward_matrices(p))
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    ox = xx[None] - cx - p.tx[:, None, None]
    oy = yy[None] - cy - p.ty[:, None, None]
    sx = inv[:, 0, 0, None, None] * ox + inv[:, 0, 1, None, None] * oy + cx
    sy = inv[:, 1, 0, None, None] * ox + inv[:, 1, 1, None, None] * oy + cy
    # snap values within rounding noise of an integer so identity maps are exact
    rx, ry = np.round(sx), np.round(sy)
    sx = np.where(np.abs(sx - rx) < 1e-9, rx, sx)
    sy = np.where(np.abs(sy - ry) < 1e-9, ry, sy)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    flat = images.reshape(n, h * w)
    rows = np.arange(n)[:, None, None]
    out = np.zeros((n, h, w))
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi, yi = x0 + dx, y0 + dy
            ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            vals = flat[rows, np.where(ok, yi * w + xi, 0)]
            out += np.where(ok, vals, 0.0) * wx * wy
    return np.clip(out, 0.0, 1.0)


def affine_augment(image: np.ndarray, config: AffineAugmentConfig, rng: np.random.Generator) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise DataError("affine_augment expects a square image")
    p = sample_affine(config, image.shape[0], 1, rng)
    return apply_affine(image[None], p)[0]


def augment_flat(batch: np.ndarray, side: int, config: AffineAugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Augment a B x side^2 batch of flattened images."""
    n = batch.shape[0]
    p = sample_affine(config, side, n, rng)
    return apply_affine(batch.reshape(n, side, side), p).reshape(n, side * side)


# --- toy set and batching --------------------------------------------------


TOY_POINTS = 1000


def make_toy2d(seed: int = 0, n: int = TOY_POINTS) -> np.ndarray:
    """Points uniform in (0.1, 2.0)^2, i.e. strictly inside the first quadrant."""
    return np.random.default_rng(seed).uniform(0.1, 2.0, size=(n, 2))


def batches(indices, batch_size: int, seed: int, epoch: int, drop_last: bool = True) -> list[np.ndarray]:
    """Seeded per-epoch shuffle of ``indices`` cut into blocks.

    ``indices`` may be a Dataset (its train split is used) or an index array.
    """
    if batch_size < 1:
        raise DataError("batch_size must be >= 1")
    if isinstance(indices, Dataset):
        indices = indices.splits["train"]
    idx = np.asarray(indices)
    perm = idx[np.random.default_rng([seed, epoch]).permutation(len(idx))]
    stop = (len(perm) // batch_size) * batch_size if drop_last else len(perm)
    return [perm[i : i + batch_size] for i in range(0, stop, batch_size)]


def resolve_dataset(name: str, manifest: str = "", data_root=None) -> Dataset:
    """Look ``name`` up in the manifest, or treat ``blobs<seed>`` as synthetic."""
    if manifest:
        for entry in read_manifest(manifest):
            if entry.name == name:
                return load_entry(entry, data_root)
        raise DataError(f"dataset {name!r} not in manifest {manifest}")
    if name.startswith("blobs") and name[5:].isdigit():
        return synth_dataset(name, int(name[5:]))
    raise DataError(f"unknown dataset {name!r}")
