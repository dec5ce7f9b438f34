import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmim.data import make_toy2d
from cmim.errors import ContractError, DivergenceError
from cmim.toy2d import (
    ANGLE_BINS,
    ToySnapshot,
    angle_histogram,
    circular_uniformity,
    run_toy,
    snapshot_svg,
    write_trajectory,
)


class TestUniformity:
    def test_single_direction(self):
        assert circular_uniformity([0.3] * 10) == pytest.approx(1.0, abs=1e-15)

    def test_opposite(self):
        assert circular_uniformity([0.0, math.pi]) == pytest.approx(0.0, abs=1e-15)

    def test_evenly_spaced(self):
        assert circular_uniformity(np.linspace(0, 2 * math.pi, 12, endpoint=False)) < 1e-15

    def test_uniform_draws(self):
        a = np.random.default_rng(0).uniform(-math.pi, math.pi, 100_000)
        assert circular_uniformity(a) < 0.01

    def test_empty(self):
        with pytest.raises(ContractError):
            circular_uniformity([])

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=50), st.floats(-math.pi, math.pi))
    def test_rotation_invariant(self, angles, shift):
        a = np.array(angles)
        assert circular_uniformity(a + shift) == pytest.approx(circular_uniformity(a), abs=1e-12)
        assert 0.0 <= circular_uniformity(a) <= 1.0


class TestHistogram:
    def test_counts_everything(self):
        a = np.random.default_rng(1).uniform(-math.pi, math.pi, 500)
        h = angle_histogram(np.append(a, [-math.pi, math.pi]))
        assert len(h) == ANGLE_BINS and h.sum() == 502

    def test_boundaries(self):
        # right-closed bins; -pi and pi are the same direction and land in the last bin
        h = angle_histogram([-math.pi, math.pi])
        assert h[-1] == 2


class TestRunToy:
    def test_initial_quadrant(self):
        traj = run_toy(make_toy2d(0), steps=0)
        a = traj.at(0).angles
        assert np.all((a > 0) & (a < math.pi / 2))
        assert traj.at(0).resultant > 0.9

    def test_spreads(self):
        traj = run_toy(make_toy2d(1, n=200), steps=300, snapshots=(0,))
        assert traj.final.resultant < traj.at(0).resultant
        assert traj.losses[-1][1] < traj.losses[0][1]

    def test_snapshot_steps(self):
        traj = run_toy(make_toy2d(0, n=50), steps=30, snapshots=(0, 10, 200))
        assert [s.step for s in traj.snapshots] == [0, 10, 30]
        with pytest.raises(KeyError):
            traj.at(200)

    @settings(max_examples=5, deadline=None)
    @given(st.floats(-math.pi, math.pi), st.integers(0, 100))
    def test_rotation_equivariance(self, theta, seed):
        pts = make_toy2d(seed, n=100)
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        a = run_toy(pts, steps=50, snapshots=()).final.points
        b = run_toy(pts @ rot.T, steps=50, snapshots=()).final.points
        assert np.allclose(a @ rot.T, b, atol=1e-8)

    def test_deterministic(self):
        a = run_toy(make_toy2d(2, n=80), steps=20).final.points
        assert np.array_equal(a, run_toy(make_toy2d(2, n=80), steps=20).final.points)

    def test_divergence(self):
        pts = make_toy2d(0, n=10)
        pts[3] = np.nan
        with pytest.raises(DivergenceError) as exc:
            run_toy(pts, steps=5)
        assert exc.value.step == 0

    def test_bad_input(self):
        with pytest.raises(ContractError):
            run_toy(np.zeros((1, 2)), steps=1)
        with pytest.raises(ContractError):
            run_toy(np.ones((4, 3)), steps=1)
        with pytest.raises(ContractError):
            run_toy(make_toy2d(0, n=4), steps=-1)


class TestOutputs:
    def test_snapshot_stats(self):
        snap = ToySnapshot(0, np.array([[1.0, 0.0], [0.0, 3.0]]))
        assert np.allclose(snap.radii, [1.0, 3.0])
        assert snap.radius_cv == pytest.approx(0.5)
        counts, edges = snap.radius_histogram()
        assert counts.sum() == 2 and edges[0] <= 1.0 and edges[-1] >= 3.0

    def test_files_byte_identical(self, tmp_path):
        traj = run_toy(make_toy2d(0, n=40), steps=10, snapshots=(0, 5))
        first = write_trajectory(tmp_path / "a", traj, "hdr")
        second = write_trajectory(tmp_path / "b", run_toy(make_toy2d(0, n=40), steps=10, snapshots=(0, 5)), "hdr")
        assert [p.name for p in first] == [p.name for p in second]
        assert "summary.csv" in [p.name for p in first]
        for p, q in zip(first, second):
            assert p.read_bytes() == q.read_bytes()

    def test_svg_well_formed(self):
        doc = snapshot_svg(run_toy(make_toy2d(0, n=30), steps=2).final, "header text")
        root = ET.fromstring(doc)
        assert root.tag.endswith("svg")
