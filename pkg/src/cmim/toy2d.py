"""Free 2D latent points pushed apart by the matched-pair contrastive loss.

Only pairwise angles enter the loss, so the radial coordinate of every point
is untouched to first order while the angles spread around the circle.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import svg
from .contrastive import cmim_latent_loss_grad_dense
from .errors import ContractError, DivergenceError

ANGLE_BINS = 36
RADIUS_BINS = 30
DEFAULT_STEPS = 4200
DEFAULT_SNAPSHOTS = (0, 200, 400)


def circular_uniformity(angles) -> float:
    """Resultant length of unit vectors at ``angles``; 0 means balanced, 1 means concentrated."""
    a = np.asarray(angles, dtype=np.float64).ravel()
    if a.size == 0:
        raise ContractError("circular_uniformity needs at least one angle")
    return float(min(1.0, math.hypot(np.cos(a).mean(), np.sin(a).mean())))


def angle_edges() -> np.ndarray:
    return np.linspace(-math.pi, math.pi, ANGLE_BINS + 1)


def angle_histogram(angles) -> np.ndarray:
    """Counts over (-pi, pi] in 36 equal bins, right edges closed."""
    a = np.asarray(angles, dtype=np.float64)
    a = np.where(a <= -math.pi, math.pi, a)  # -pi and pi are the same direction
    idx = np.ceil((a + math.pi) / (2 * math.pi) * ANGLE_BINS).astype(int) - 1
    idx = np.clip(idx, 0, ANGLE_BINS - 1)
    return np.bincount(idx, minlength=ANGLE_BINS)


@dataclass
class ToySnapshot:
    step: int
    points: np.ndarray

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.points[:, 1], self.points[:, 0])

    @property
    def radii(self) -> np.ndarray:
        return np.hypot(self.points[:, 0], self.points[:, 1])

    @property
    def resultant(self) -> float:
        return circular_uniformity(self.angles)

    @property
    def radius_cv(self) -> float:
        r = self.radii
        return float(r.std() / r.mean())

    def angle_histogram(self) -> np.ndarray:
        return angle_histogram(self.angles)

    def radius_histogram(self, edges=None):
        if edges is None:
            edges = np.linspace(0.0, float(self.radii.max()) * 1.05, RADIUS_BINS + 1)
        counts, edges = np.histogram(self.radii, bins=edges)
        return counts, edges


@dataclass
class ToyTrajectory:
    snapshots: list = field(default_factory=list)
    losses: list = field(default_factory=list)  # (step, loss) at each snapshot
    lr: float = 0.0
    tau: float = 1.0

    def at(self, step: int) -> ToySnapshot:
        for s in self.snapshots:
            if s.step == step:
                return s
        raise KeyError(step)

    @property
    def final(self) -> ToySnapshot:
        return self.snapshots[-1]


def run_toy(points, steps: int = DEFAULT_STEPS, lr: float = 0.05, tau: float = 1.0, snapshots=DEFAULT_SNAPSHOTS):
    """Full-batch gradient descent on the mean loss over all points.

    ``lr`` is a per-point step size: each point moves by ``lr`` times the
    gradient of the summed loss, which is ``B`` times the gradient of the mean.
    Snapshots are taken at the requested steps (those <= ``steps``) and at
    ``steps`` itself.
    """
    z = np.array(points, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != 2 or len(z) < 2:
        raise ContractError("toy points must be an N x 2 array with N >= 2")
    if steps < 0:
        raise ContractError("steps must be >= 0")
    b = len(z)
    want = sorted({s for s in snapshots if 0 <= s <= steps} | {steps})
    traj = ToyTrajectory(lr=lr, tau=tau)
    step_size = lr * b
    for step in range(steps + 1):
        loss, g = cmim_latent_loss_grad_dense(z, tau)
        if not np.isfinite(loss) or not np.all(np.isfinite(z)):
            raise DivergenceError(f"toy trajectory diverged at step {step}", step)
        if step == want[0]:
            traj.snapshots.append(ToySnapshot(step, z.copy()))
            traj.losses.append((step, loss))
            want.pop(0)
        if step == steps:
            break
        z -= step_size * g
    return traj


def write_snapshot_csv(path, snap: ToySnapshot) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "y", "angle", "radius"))
        for (x, y), a, r in zip(snap.points, snap.angles, snap.radii):
            w.writerow((repr(float(x)), repr(float(y)), repr(float(a)), repr(float(r))))


def snapshot_svg(snap: ToySnapshot, header: str = "") -> str:
    """Scatter, angle histogram and radius histogram side by side."""
    lim = float(np.abs(snap.points).max()) * 1.1
    scatter = svg.Panel(50, 50, 220, 220, (-lim, lim), (-lim, lim), f"step {snap.step}: latents")
    scatter.frame("z1", "z2")
    svg.scatter_panel(scatter, snap.points[:, 0], snap.points[:, 1], radius=1.2)

    ah = snap.angle_histogram()
    angles = svg.Panel(330, 50, 220, 220, (-math.pi, math.pi), (0, max(1, ah.max()) * 1.1),
                       f"angles (R={snap.resultant:.3f})")
    angles.frame("angle", "count")
    svg.histogram_panel(angles, ah, angle_edges(), svg.PALETTE[1])

    rh, edges = snap.radius_histogram()
    radii = svg.Panel(610, 50, 220, 220, (edges[0], edges[-1]), (0, max(1, rh.max()) * 1.1),
                      f"radii (cv={snap.radius_cv:.3f})")
    radii.frame("radius", "count")
    svg.histogram_panel(radii, rh, edges, svg.PALETTE[2])
    return svg.document([scatter, angles, radii], 860, 320, header)


def write_trajectory(out_dir, traj: ToyTrajectory, header: str = "") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for snap in traj.snapshots:
        p = out / f"snapshot_{snap.step:05d}.csv"
        write_snapshot_csv(p, snap)
        q = out / f"snapshot_{snap.step:05d}.svg"
        q.write_text(snapshot_svg(snap, header))
        written += [p, q]
    summary = out / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "loss", "resultant", "radius_cv"))
        for snap, (_, loss) in zip(traj.snapshots, traj.losses):
            w.writerow((snap.step, repr(float(loss)), repr(snap.resultant), repr(snap.radius_cv)))
    written.append(summary)
    return written
