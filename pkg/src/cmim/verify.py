"""Mathematical self-checks with explicit tolerances.

Each check returns a ``CheckResult``; ``run_verification`` collects them and
``format_report`` renders one line per check.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .contrastive import (
    ContrastiveBatch,
    diagnostics_from_logits,
    logit_grad_from_diagnostics,
    offset_equivalence,
)
from .data import make_toy2d
from .numerics import (
    ConcentrationQuery,
    SimilarityConfig,
    hoeffding_bound,
    negative_mean_samples,
)
from .objectives import VARIANTS, build_model, minibatch_loss
from .toy2d import run_toy


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}  {self.name:<24} value={self.value:.3e}  tol={self.tolerance:.1e}  {self.detail}"
        ).rstrip()


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_offset_equivalence(n_batches=1000, seed=0, offset_fn=None, tol=1e-10) -> CheckResult:
    """-log p(k=1) against InfoNCE with the positive shifted by log(B-1).

    ``offset_fn(B)`` replaces the shift; a wrong one must make this fail.
    """
    rng = np.random.default_rng(seed)
    grid = [(b, t) for b in (2, 8, 64, 256) for t in (0.1, 1.0)]
    worst = 0.0
    for k in range(n_batches):
        b, tau = grid[k % len(grid)]
        z = rng.standard_normal((b, int(rng.integers(2, 9))))
        batch = ContrastiveBatch(z, SimilarityConfig(tau))
        off = None if offset_fn is None else offset_fn(b)
        worst = max(worst, offset_equivalence(batch, off))
    return CheckResult("offset_equivalence", worst, tol, worst < tol, f"{n_batches} batches")


@_timed
def check_calibration(tol=1e-12) -> CheckResult:
    """Equal logits: p(k=1) = 1/2 while the InfoNCE softmax gives 1/B."""
    worst = 0.0
    for b in (2, 3, 8, 64, 256, 1000):
        for c in (-10.0, 0.0, 1.0, 10.0):
            s = np.full((b, b), c)
            d = diagnostics_from_logits(s)
            worst = max(worst, float(np.max(np.abs(d.p_match - 0.5))))
            soft = np.exp(s[0] - s[0].max())
            soft /= soft.sum()
            worst = max(worst, abs(float(soft[0]) - 1.0 / b))
    return CheckResult("calibration", worst, tol, worst < tol, "p=1/2 vs softmax 1/B")


def per_anchor_loss(s: np.ndarray) -> np.ndarray:
    return diagnostics_from_logits(s).loss


@_timed
def check_logit_gradients(n_instances=1000, seed=1, h=1e-5, tol=1e-6) -> CheckResult:
    """Closed-form logit gradient against central differences of the mean loss."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        b = int(rng.integers(2, 9))
        s = rng.uniform(-3.0, 3.0, size=(b, b))
        analytic = logit_grad_from_diagnostics(diagnostics_from_logits(s))
        fd = np.empty_like(s)
        for i in range(b):
            for j in range(b):
                e = np.zeros_like(s)
                e[i, j] = h
                fd[i, j] = (per_anchor_loss(s + e).mean() - per_anchor_loss(s - e).mean()) / (2 * h)
        worst = max(worst, relative_error(analytic, fd))
    return CheckResult("closed_form_logit_grads", worst, tol, worst < tol, f"{n_instances} instances")


def relative_error(a, b) -> float:
    a = np.concatenate([np.ravel(x) for x in a]) if isinstance(a, list) else np.ravel(a)
    b = np.concatenate([np.ravel(x) for x in b]) if isinstance(b, list) else np.ravel(b)
    scale = max(float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def tiny_problem(variant: str, seed: int = 0, input_dim=6, latent_dim=2, batch=4, hidden=(5,)):
    """A small model, batch and noise for finite-difference checks."""
    rng = np.random.default_rng(seed)
    model = build_model(variant, input_dim, latent_dim, rng, hidden=hidden, tau=0.5)
    x = rng.uniform(0.0, 1.0, size=(batch, input_dim))
    aug = np.clip(x + 0.05 * rng.standard_normal(x.shape), 0.0, 1.0)
    noise = rng.standard_normal((batch, latent_dim))
    pnoise = rng.standard_normal((batch, latent_dim))
    return model, x, aug, noise, pnoise


def objective_fd_error(variant: str, seed: int = 0, h: float = 1e-6) -> float:
    model, x, aug, noise, pnoise = tiny_problem(variant, seed)
    extra = dict(augmented_x=aug, positive_noise=pnoise) if variant == "InfoNCE" else {}

    def total():
        return minibatch_loss(model, x, noise, need_grad=False, **extra)[0].total

    _, analytic = minibatch_loss(model, x, noise, need_grad=True, **extra)
    fd = []
    for p in model.params():
        g = np.empty_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = total()
            flat[k] = old - h
            down = total()
            flat[k] = old
            gflat[k] = (up - down) / (2 * h)
        fd.append(g)
    return relative_error(analytic, fd)


@_timed
def check_objective_gradients(seeds=(0, 1), tol=1e-4) -> CheckResult:
    """Backpropagated parameter gradients of every variant against central differences."""
    errs = {v: max(objective_fd_error(v, s) for s in seeds) for v in VARIANTS}
    worst_v = max(errs, key=errs.get)
    return CheckResult("objective_param_grads", errs[worst_v], tol, errs[worst_v] < tol,
                       f"{len(VARIANTS)} variants, worst {worst_v}")


def closed_form_mean(tau: float) -> float:
    """E exp(cos/tau) for uniform directions in R^3, where cos ~ Uniform(-1, 1)."""
    return tau * math.sinh(1.0 / tau)


@dataclass
class ConcentrationCell:
    tau: float
    num_negatives: int
    epsilon: float
    frequency: float
    bound: float
    variance: float


def concentration_grid(trials=10_000, seed=2, taus=(0.5, 1.0), negatives=(16, 64, 256), epsilons=(0.1, 0.25, 0.5)):
    rng = np.random.default_rng(seed)
    cells = []
    for tau in taus:
        mu = closed_form_mean(tau)
        for n in negatives:
            means = negative_mean_samples(tau, n, trials, rng)
            dev = np.abs(means - mu)
            var = float(means.var())
            for eps in epsilons:
                q = ConcentrationQuery(tau, n, eps)
                cells.append(ConcentrationCell(tau, n, eps, float(np.mean(dev >= eps)), hoeffding_bound(q), var))
    return cells


@_timed
def check_concentration(trials=10_000, seed=2) -> CheckResult:
    """Deviation frequencies stay under the Hoeffding bound; variance times (B-1) stays within 2x."""
    cells = concentration_grid(trials, seed)
    slack = min(c.bound - c.frequency for c in cells)
    ratio = 1.0
    for tau in sorted({c.tau for c in cells}):
        scaled = {c.num_negatives: c.variance * c.num_negatives for c in cells if c.tau == tau}
        ratio = max(ratio, max(scaled.values()) / min(scaled.values()))
    ok = slack >= 0.0 and ratio <= 2.0
    return CheckResult("hoeffding_monte_carlo", slack, 0.0, ok,
                       f"min(bound-freq) over {len(cells)} cells; variance*(B-1) spread {ratio:.3f} (<=2)")


@_timed
def check_toy_uniformity(seed=0, steps=4200, lr=0.05, tol=0.1) -> CheckResult:
    traj = run_toy(make_toy2d(seed), steps=steps, lr=lr)
    r, cv = traj.final.resultant, traj.final.radius_cv
    return CheckResult("toy2d_uniformity", r, tol, r < tol and cv > 0.05, f"radius cv {cv:.3f} (>0.05)")


def run_verification(offset_fn=None, quick=False) -> list[CheckResult]:
    """All checks.  ``quick`` shrinks sample counts (never tolerances) for smoke tests."""
    n = 100 if quick else 1000
    return [
        check_offset_equivalence(n_batches=n, offset_fn=offset_fn),
        check_calibration(),
        check_logit_gradients(n_instances=n // 10 if quick else n),
        check_objective_gradients(seeds=(0,) if quick else (0, 1)),
        check_concentration(trials=2000 if quick else 10_000),
        check_toy_uniformity(steps=4200),
    ]


def format_report(results: list[CheckResult], header: str = "") -> str:
    lines = [header] if header else []
    lines += [r.line() for r in results]
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"


__all__ = [
    "CheckResult",
    "check_offset_equivalence",
    "check_calibration",
    "check_logit_gradients",
    "check_objective_gradients",
    "check_concentration",
    "check_toy_uniformity",
    "run_verification",
    "format_report",
    "closed_form_mean",
    "concentration_grid",
    "objective_fd_error",
    "relative_error",
]
