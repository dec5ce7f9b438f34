"""Embeddings and downstream statistics: KNN-5, MLP probe, z-scores, ranks, slopes, t-test."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ContractError, DomainError, UnsupportedOperation
from .nn import OptimizerState, adam_step, backward, forward, mlp
from .objectives import ModelBundle, encode

CLASSIFIERS = ("knn5_cosine", "knn5_euclidean", "mlp")
EMBEDDING_KINDS = ("mean_encoding", "informative")


@dataclass
class EmbeddingSet:
    vectors: np.ndarray
    kind: str
    source: str = ""


def mean_encoding(model: ModelBundle, x) -> np.ndarray:
    post, _ = encode(model, x)
    return post.mean


def informative_embedding(model: ModelBundle, x) -> np.ndarray:
    """Decoder's last hidden activation, conditioned on the posterior mean."""
    if not model.has_decoder:
        raise UnsupportedOperation(f"{model.variant} has no decoder, so no informative embedding")
    z = mean_encoding(model, x)
    _, tape = forward(model.decoder, z)
    return tape.inputs[-1]


def embed(model: ModelBundle, x, kind: str) -> EmbeddingSet:
    if kind == "mean_encoding":
        return EmbeddingSet(mean_encoding(model, x), kind)
    if kind == "informative":
        return EmbeddingSet(informative_embedding(model, x), kind)
    raise ValueError(f"unknown embedding kind {kind!r}")


# --- probes ----------------------------------------------------------------


def _unit_rows(x):
    n = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(n == 0.0, 1.0, n)


def pairwise_distances(train, test, metric: str) -> np.ndarray:
    if metric == "euclidean":
        d2 = (test**2).sum(1)[:, None] + (train**2).sum(1)[None, :] - 2.0 * test @ train.T
        return np.sqrt(np.maximum(d2, 0.0))
    if metric == "cosine":
        return 1.0 - _unit_rows(test) @ _unit_rows(train).T
    raise ValueError(f"unknown metric {metric!r}")


def knn5_predict(train_emb, train_labels, test_emb, metric="euclidean", k=5) -> np.ndarray:
    """Majority vote; distance ties go to the lower train index, vote ties to the smaller label."""
    train_emb = np.asarray(train_emb, dtype=np.float64)
    test_emb = np.asarray(test_emb, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    if len(train_emb) < k:
        raise ContractError(f"need at least {k} training points")
    d = pairwise_distances(train_emb, test_emb, metric)
    nn_idx = np.argsort(d, axis=1, kind="stable")[:, :k]
    votes = train_labels[nn_idx]
    n_labels = int(train_labels.max()) + 1
    counts = np.zeros((len(test_emb), n_labels), dtype=np.int64)
    np.add.at(counts, (np.arange(len(test_emb))[:, None], votes), 1)
    return counts.argmax(axis=1)


def knn5(train_emb, train_labels, test_emb, test_labels, metric="euclidean") -> float:
    pred = knn5_predict(train_emb, train_labels, test_emb, metric)
    return float(np.mean(pred == np.asarray(test_labels)))


def mlp_probe(
    train_emb, train_labels, test_emb, test_labels, seed=0,
    width=400, steps=1000, lr=1e-3, batch_size=32,
) -> float:
    """One-hidden-layer ReLU softmax classifier trained with Adam.

    Features are standardized with train statistics before fitting.
    """
    xtr = np.asarray(train_emb, dtype=np.float64)
    xte = np.asarray(test_emb, dtype=np.float64)
    ytr = np.asarray(train_labels)
    if len(np.unique(ytr)) < 2:
        raise ContractError("probe needs at least two classes")
    mu = xtr.mean(0)
    sd = xtr.std(0)
    sd[sd == 0.0] = 1.0
    xtr = (xtr - mu) / sd
    xte = (xte - mu) / sd
    n_classes = int(max(ytr.max(), np.max(test_labels)) + 1)
    rng = np.random.default_rng(seed)
    net = mlp(xtr.shape[1], [width], n_classes, rng, activation="relu")
    params = net.params()
    opt = OptimizerState.for_params(params, base_lr=lr)
    onehot = np.eye(n_classes)
    for _ in range(steps):
        idx = rng.integers(0, len(xtr), size=min(batch_size, len(xtr)))
        logits, tape = forward(net, xtr[idx])
        logits = logits - logits.max(1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(1, keepdims=True)
        grads, _ = backward(net, tape, (p - onehot[ytr[idx]]) / len(idx))
        adam_step(opt, params, grads)
    pred = forward(net, xte)[0].argmax(1)
    return float(np.mean(pred == np.asarray(test_labels)))


def run_probe(classifier, train_emb, train_labels, test_emb, test_labels, seed=0) -> float:
    if classifier == "knn5_cosine":
        return knn5(train_emb, train_labels, test_emb, test_labels, "cosine")
    if classifier == "knn5_euclidean":
        return knn5(train_emb, train_labels, test_emb, test_labels, "euclidean")
    if classifier == "mlp":
        return mlp_probe(train_emb, train_labels, test_emb, test_labels, seed)
    raise ValueError(f"unknown classifier {classifier!r}")


# --- aggregation -----------------------------------------------------------


def zscore_table(acc: dict) -> dict:
    """Population z-scores over the cells of one (dataset, setting)."""
    if not acc:
        raise ContractError("empty population")
    keys = list(acc)
    a = np.array([acc[k] for k in keys], dtype=np.float64)
    sd = a.std()
    # identical accuracies can leave a round-off sd; dividing by it would invent z = +-1
    flat = a.max() - a.min() == 0.0 or sd <= 1e-12 * max(1.0, abs(a.mean()))
    z = np.zeros_like(a) if flat else (a - a.mean()) / sd
    return dict(zip(keys, z.tolist()))


def rank_table(acc: dict) -> dict:
    """Rank 1 is the best accuracy; ties share the mean of the covered ranks."""
    if not acc:
        raise ContractError("empty population")
    keys = list(acc)
    a = np.array([acc[k] for k in keys], dtype=np.float64)
    order = np.argsort(-a, kind="stable")
    ranks = np.empty(len(a))
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return dict(zip(keys, ranks.tolist()))


def batch_size_slope(points) -> float:
    """OLS slope of y on raw x for (x, y) pairs."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ContractError("need at least two (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    dx = x - x.mean()
    sxx = dx @ dx
    if sxx == 0.0:
        raise DomainError("all batch sizes are equal; slope undefined")
    return float(dx @ (y - y.mean()) / sxx)


@dataclass
class SlopeStats:
    slopes: np.ndarray
    mean: float
    t: float
    p: float
    n: int
    labels: list = field(default_factory=list)  # (model, setting, dataset) per slope


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) via the regularized incomplete beta."""
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def slopes_ttest(slopes, labels=None) -> SlopeStats:
    s = np.asarray(slopes, dtype=np.float64)
    n = len(s)
    if n < 2:
        raise ContractError("t-test needs n >= 2")
    sd = s.std(ddof=1)
    if sd == 0.0:
        raise DomainError("zero sample variance; p-value undefined")
    mean = float(s.mean())
    t = mean / (sd / math.sqrt(n))
    return SlopeStats(s, mean, float(t), student_t_sf2(t, n - 1), n, list(labels or []))


# --- reports ---------------------------------------------------------------

REPORT_COLUMNS = ("model", "variant", "batch_size", "dataset", "classifier", "embedding_kind", "accuracy", "z", "rank")


@dataclass
class EvalRow:
    model: str
    variant: str
    batch_size: int
    dataset: str
    classifier: str
    embedding_kind: str
    accuracy: float
    z: float = 0.0
    rank: float = 0.0


def fill_zscores_and_ranks(rows: list[EvalRow]) -> list[EvalRow]:
    """z and rank within each (dataset, classifier, embedding_kind) group."""
    groups: dict = {}
    for i, r in enumerate(rows):
        groups.setdefault((r.dataset, r.classifier, r.embedding_kind), {})[i] = r.accuracy
    for acc in groups.values():
        z = zscore_table(acc)
        rk = rank_table(acc)
        for i in acc:
            rows[i].z = z[i]
            rows[i].rank = rk[i]
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report_csv(path, rows: list[EvalRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS])


def read_report_csv(path) -> list[EvalRow]:
    with open(path, newline="") as fh:
        out = []
        for row in csv.DictReader(fh):
            out.append(
                EvalRow(
                    row["model"], row["variant"], int(row["batch_size"]), row["dataset"],
                    row["classifier"], row["embedding_kind"], float(row["accuracy"]),
                    float(row["z"]), float(row["rank"]),
                )
            )
    return out


SLOPE_COLUMNS = ("model", "setting", "dataset", "slope", "t", "p", "n")


def write_slopes_csv(path, stats_by_model: dict) -> None:
    """One row per slope, then a summary row per model (setting/dataset = ALL)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SLOPE_COLUMNS)
        for model, st in stats_by_model.items():
            for (m, setting, dataset), slope in zip(st.labels, st.slopes):
                w.writerow([m, setting, dataset, repr(float(slope)), "", "", ""])
        for model, st in stats_by_model.items():
            w.writerow([model, "ALL", "ALL", repr(st.mean), repr(st.t), repr(st.p), st.n])


def read_slopes_csv(path) -> dict:
    """Returns {model: {"slopes": [...], "mean", "t", "p", "n"}}."""
    out: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            d = out.setdefault(row["model"], {"slopes": []})
            if row["setting"] == "ALL":
                d.update(mean=float(row["slope"]), t=float(row["t"]), p=float(row["p"]), n=int(row["n"]))
            else:
                d["slopes"].append(float(row["slope"]))
    return out
