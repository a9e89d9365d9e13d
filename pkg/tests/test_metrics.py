import math

import numpy as np
import pytest

from faceproj.errors import LandmarkIndexMismatch
from faceproj.geometry import RigidTransform, SurfacePointSet
from faceproj.landmarks import LandmarkSet3D
from faceproj.meshio import load_ply
from faceproj.metrics import (
    SurfaceErrorReport,
    distance_colors,
    export_distance_colormap,
    point_error,
    signed_distance,
    surface_error,
)


def landmark_set(points, indices=None):
    points = np.asarray(points, dtype=float)
    if indices is None:
        indices = np.arange(len(points))
    return LandmarkSet3D(np.asarray(indices), points)


def brute_force_distances(x, y):
    """Oracle: per-x-point nearest distance into y, double loop."""
    out = np.empty(len(x))
    for i, p in enumerate(x):
        out[i] = min(math.sqrt(((p - q) ** 2).sum()) for q in y)
    return out


def random_rotation(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-math.pi, math.pi)
    kx = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + math.sin(angle) * kx + (1 - math.cos(angle)) * (kx @ kx)


# ---------------------------------------------------------------------------
# landmark RMS error
# ---------------------------------------------------------------------------

class TestPointError:
    def test_identical_sets_zero(self):
        rng = np.random.default_rng(1)
        s = landmark_set(rng.normal(size=(8, 3)))
        assert point_error(s, s) == 0.0

    def test_single_pair_distance(self):
        a = landmark_set([[0.0, 0, 0]])
        b = landmark_set([[3.0, 0, 4]])
        assert point_error(a, b) == pytest.approx(5.0, abs=1e-15)

    def test_two_pairs_rms(self):
        a = landmark_set([[0.0, 0, 0], [10.0, 0, 0]])
        b = landmark_set([[3.0, 0, 0], [10.0, 4, 0]])
        assert point_error(a, b) == pytest.approx(math.sqrt(12.5), abs=1e-12)

    def test_index_mismatch_rejected(self):
        a = landmark_set(np.eye(3), indices=[0, 1, 2])
        b = landmark_set(np.eye(3), indices=[0, 1, 3])
        with pytest.raises(LandmarkIndexMismatch, match="differ"):
            point_error(a, b)

    def test_pairs_by_index_not_position(self):
        pts = np.array([[1.0, 0, 0], [0.0, 2, 0]])
        a = landmark_set(pts, indices=[3, 7])
        b = landmark_set(pts, indices=[3, 7])
        assert point_error(a, b) == 0.0

    def test_rigid_invariance(self):
        rng = np.random.default_rng(2)
        pa = rng.normal(scale=20.0, size=(10, 3))
        pb = rng.normal(scale=20.0, size=(10, 3))
        base = point_error(landmark_set(pa), landmark_set(pb))
        t = RigidTransform(random_rotation(rng), rng.normal(size=3))
        moved = point_error(
            landmark_set(t.apply_points(pa)), landmark_set(t.apply_points(pb))
        )
        assert moved == pytest.approx(base, abs=1e-9)


# ---------------------------------------------------------------------------
# one-sided surface error
# ---------------------------------------------------------------------------

class TestSurfaceError:
    def test_identical_sets(self):
        rng = np.random.default_rng(3)
        s = SurfacePointSet(rng.normal(size=(50, 3)))
        rep = surface_error(s, s)
        assert rep.e_sup == 0.0 and rep.e_mean == 0.0
        assert np.all(rep.distances == 0.0)

    def test_hand_example_asymmetric(self):
        x = SurfacePointSet(np.array([[0.0, 0, 0]]))
        y = SurfacePointSet(np.array([[1.0, 0, 0], [3.0, 0, 0]]))
        rep = surface_error(x, y)
        assert rep.e_sup == 1.0 and rep.e_mean == 1.0
        # swapped roles: distances 1 and 3
        rep2 = surface_error(y, x)
        assert rep2.e_sup == 3.0
        assert rep2.e_mean == 2.0

    def test_matches_brute_force_exactly(self):
        rng = np.random.default_rng(4)
        x = rng.normal(scale=10.0, size=(500, 3))
        y = rng.normal(scale=10.0, size=(500, 3))
        rep = surface_error(SurfacePointSet(x), SurfacePointSet(y))
        oracle = brute_force_distances(x, y)
        np.testing.assert_array_equal(rep.distances, oracle)
        assert rep.e_sup == oracle.max()
        assert rep.e_mean == oracle.mean()

    def test_sup_at_least_mean_property(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            x = SurfacePointSet(rng.normal(size=(rng.integers(1, 60), 3)))
            y = SurfacePointSet(rng.normal(size=(rng.integers(1, 60), 3)))
            rep = surface_error(x, y)
            assert rep.e_sup >= rep.e_mean >= 0.0

    def test_rigid_invariance(self):
        rng = np.random.default_rng(6)
        x = rng.normal(scale=15.0, size=(80, 3))
        y = rng.normal(scale=15.0, size=(90, 3))
        base = surface_error(SurfacePointSet(x), SurfacePointSet(y))
        t = RigidTransform(random_rotation(rng), rng.normal(scale=10.0, size=3))
        moved = surface_error(
            SurfacePointSet(t.apply_points(x)), SurfacePointSet(t.apply_points(y))
        )
        np.testing.assert_allclose(moved.distances, base.distances, atol=1e-9)

    def test_empty_rejected(self):
        s = SurfacePointSet(np.eye(3))
        with pytest.raises(ValueError, match="non-empty"):
            surface_error(s, SurfacePointSet(np.zeros((0, 3))))

    def test_report_invariants_enforced(self):
        with pytest.raises(ValueError, match="e_sup"):
            SurfaceErrorReport(e_sup=0.5, e_mean=0.1, distances=np.array([1.0]))
        with pytest.raises(ValueError, match="e_sup"):
            SurfaceErrorReport(e_sup=1.0, e_mean=2.0, distances=np.array([1.0]))
        with pytest.raises(ValueError, match="non-empty"):
            SurfaceErrorReport(e_sup=0.0, e_mean=0.0, distances=np.array([]))


# ---------------------------------------------------------------------------
# signed distance
# ---------------------------------------------------------------------------

class TestSignedDistance:
    def test_positive_along_normal(self):
        y = SurfacePointSet(np.array([[0.0, 0, 0]]), np.array([[0.0, 1, 0]]))
        x = SurfacePointSet(np.array([[0.0, 2, 0]]))
        np.testing.assert_array_equal(signed_distance(y, x), [2.0])

    def test_negative_against_normal(self):
        y = SurfacePointSet(np.array([[0.0, 0, 0]]), np.array([[0.0, 1, 0]]))
        x = SurfacePointSet(np.array([[0.0, -2, 0]]))
        np.testing.assert_array_equal(signed_distance(y, x), [-2.0])

    def test_zero_dot_is_positive(self):
        # nearest point exactly in the tangent plane: sgn(0) = +1
        y = SurfacePointSet(np.array([[0.0, 0, 0]]), np.array([[0.0, 1, 0]]))
        x = SurfacePointSet(np.array([[3.0, 0, 0]]))
        d = signed_distance(y, x)
        assert d[0] == 3.0

    def test_abs_matches_surface_error_roles_swapped(self):
        rng = np.random.default_rng(7)
        ypts = rng.normal(scale=10.0, size=(200, 3))
        n = rng.normal(size=(200, 3))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        y = SurfacePointSet(ypts, n)
        x = SurfacePointSet(rng.normal(scale=10.0, size=(300, 3)))
        sd = signed_distance(y, x)
        rep = surface_error(y, x)
        np.testing.assert_array_equal(np.abs(sd), rep.distances)
        oracle = brute_force_distances(ypts, x.points)
        np.testing.assert_array_equal(np.abs(sd), oracle)

    def test_requires_normals(self):
        y = SurfacePointSet(np.eye(3))
        with pytest.raises(ValueError, match="normals"):
            signed_distance(y, SurfacePointSet(np.eye(3)))

    def test_surface_error_signed_attachment(self):
        rng = np.random.default_rng(8)
        n = rng.normal(size=(40, 3))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        x = SurfacePointSet(rng.normal(size=(40, 3)), n)
        y = SurfacePointSet(rng.normal(size=(60, 3)))
        rep = surface_error(x, y, signed=True)
        np.testing.assert_array_equal(np.abs(rep.signed), rep.distances)


# ---------------------------------------------------------------------------
# colormap export
# ---------------------------------------------------------------------------

class TestColormap:
    def test_endpoint_colors(self):
        colors = distance_colors([-2.0, -1.0, 0.0, 1.0, 2.0], distance_range=1.0)
        np.testing.assert_array_equal(colors[0], [0, 0, 255])  # clamped blue
        np.testing.assert_array_equal(colors[1], [0, 0, 255])
        np.testing.assert_array_equal(colors[2], [255, 255, 255])
        np.testing.assert_array_equal(colors[3], [255, 0, 0])
        np.testing.assert_array_equal(colors[4], [255, 0, 0])

    def test_midpoint_blend(self):
        colors = distance_colors([0.5], distance_range=1.0)
        np.testing.assert_array_equal(colors[0], [255, 128, 128])

    def test_export_parses_back(self, tmp_path):
        rng = np.random.default_rng(9)
        pts = rng.normal(scale=5.0, size=(25, 3))
        n = rng.normal(size=(25, 3))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        y = SurfacePointSet(pts, n)
        d = rng.uniform(-3.0, 3.0, size=25)
        path = tmp_path / "cmap.ply"
        export_distance_colormap(y, d, distance_range=2.0, path=path)
        v, nrm, colors, tri = load_ply(path)
        np.testing.assert_array_equal(v, pts)
        np.testing.assert_array_equal(nrm, n)
        np.testing.assert_array_equal(colors, distance_colors(d, 2.0))
        assert tri is None

    def test_length_mismatch_rejected(self, tmp_path):
        y = SurfacePointSet(np.eye(3))
        with pytest.raises(ValueError, match="one distance per point"):
            export_distance_colormap(y, [1.0], 1.0, tmp_path / "x.ply")

    def test_bad_range_rejected(self):
        with pytest.raises(ValueError, match="distance_range"):
            distance_colors([0.0], distance_range=0.0)
