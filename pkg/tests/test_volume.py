import json

import numpy as np
import pytest

from faceproj.errors import EmptyLevelSet, MeshFormatError
from faceproj.mc_tables import (
    CORNER_OFFSETS,
    EDGE_CROSSINGS,
    EDGE_ENDPOINTS,
    TRIANGLE_TABLE,
)
from faceproj.meshio import TriangleMesh, mesh_to_point_set
from faceproj.volume import ScalarVolume, extract_isosurface, load_volume, save_volume


def sphere_volume(n=32, s=1.0, radius_voxels=10.0):
    """values = -(distance from center), so the r-sphere is the -r level set."""
    idx = np.arange(n) * s
    x, y, z = np.meshgrid(idx, idx, idx, indexing="ij")
    c = idx[n // 2]
    dist = np.sqrt((x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2)
    return ScalarVolume(-dist, spacing=(s, s, s)), c, radius_voxels * s


def trilinear(vol, pts):
    """Oracle: trilinear interpolation of vol.values at world points."""
    g = (np.asarray(pts) - np.asarray(vol.origin)) / np.asarray(vol.spacing)
    i0 = np.clip(np.floor(g).astype(int), 0, np.asarray(vol.dims) - 2)
    f = g - i0
    out = np.zeros(len(g))
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                w = (
                    (f[:, 0] if dx else 1 - f[:, 0])
                    * (f[:, 1] if dy else 1 - f[:, 1])
                    * (f[:, 2] if dz else 1 - f[:, 2])
                )
                out += w * vol.values[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    return out


def edge_statistics(mesh):
    edges = np.sort(mesh.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return uniq, counts


# ---------------------------------------------------------------------------
# case tables
# ---------------------------------------------------------------------------

class TestCaseTables:
    def test_edge_crossings_match_corner_labels(self):
        # first principles: edge e crosses iff its endpoints straddle the
        # threshold, i.e. their case bits differ
        for case in range(256):
            mask = 0
            for e, (a, b) in enumerate(EDGE_ENDPOINTS.tolist()):
                if ((case >> a) & 1) != ((case >> b) & 1):
                    mask |= 1 << e
            assert EDGE_CROSSINGS[case] == mask, case

    def test_triangle_rows_use_exactly_the_crossing_edges(self):
        for case in range(256):
            row = TRIANGLE_TABLE[case]
            used = set(int(e) for e in row if e >= 0)
            expected = {e for e in range(12) if EDGE_CROSSINGS[case] >> e & 1}
            assert used == expected, case
            # rows are triangle triples terminated by -1 padding
            n = int((row >= 0).sum())
            assert n % 3 == 0
            assert np.all(row[n:] == -1)

    def test_corner_offsets_are_unit_cube(self):
        assert sorted(map(tuple, CORNER_OFFSETS.tolist())) == sorted(
            [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)]
        )

    def test_edges_span_single_axis(self):
        for a, b in EDGE_ENDPOINTS:
            diff = CORNER_OFFSETS[b] - CORNER_OFFSETS[a]
            assert np.abs(diff).sum() == 1


# ---------------------------------------------------------------------------
# ScalarVolume
# ---------------------------------------------------------------------------

class TestScalarVolume:
    def test_requires_3d(self):
        with pytest.raises(ValueError, match="3-D"):
            ScalarVolume(np.zeros((4, 4)))

    def test_requires_min_dims(self):
        with pytest.raises(ValueError, match=">= 2"):
            ScalarVolume(np.zeros((1, 4, 4)))

    def test_requires_positive_spacing(self):
        with pytest.raises(ValueError, match="spacing"):
            ScalarVolume(np.zeros((2, 2, 2)), spacing=(1.0, 0.0, 1.0))

    def test_rejects_nan(self):
        v = np.zeros((2, 2, 2))
        v[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            ScalarVolume(v)

    def test_values_read_only(self):
        vol = ScalarVolume(np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            vol.values[0, 0, 0] = 1.0

    def test_from_flat_is_x_fastest(self):
        flat = np.arange(24.0)
        vol = ScalarVolume.from_flat(flat, (2, 3, 4))
        # flat index = ix + nx*(iy + ny*iz)
        assert vol.values[1, 0, 0] == 1.0
        assert vol.values[0, 1, 0] == 2.0
        assert vol.values[0, 0, 1] == 6.0
        assert vol.values[1, 2, 3] == 23.0

    def test_from_flat_length_checked(self):
        with pytest.raises(ValueError, match="expected 8"):
            ScalarVolume.from_flat(np.zeros(7), (2, 2, 2))


# ---------------------------------------------------------------------------
# volume file round trips
# ---------------------------------------------------------------------------

class TestVolumeIO:
    def test_round_trip_float32(self, tmp_path):
        rng = np.random.default_rng(5)
        vals = rng.normal(size=(5, 6, 7)).astype(np.float32).astype(np.float64)
        vol = ScalarVolume(vals, spacing=(0.3, 0.3, 0.5), origin=(-1.0, 2.0, 3.5))
        jp, rp = save_volume(vol, tmp_path / "v", dtype="float32")
        back = load_volume(jp)
        np.testing.assert_array_equal(back.values, vol.values)
        assert back.spacing == vol.spacing
        assert back.origin == vol.origin

    def test_round_trip_int16(self, tmp_path):
        rng = np.random.default_rng(6)
        vals = rng.integers(-1000, 3000, size=(4, 4, 4)).astype(np.float64)
        vol = ScalarVolume(vals)
        jp, _ = save_volume(vol, tmp_path / "ct", dtype="int16")
        back = load_volume(jp)
        np.testing.assert_array_equal(back.values, vals)

    def test_accepts_json_or_raw_or_bare_path(self, tmp_path):
        vol = ScalarVolume(np.arange(8.0).reshape(2, 2, 2))
        save_volume(vol, tmp_path / "v")
        for name in ("v", "v.json", "v.raw"):
            back = load_volume(tmp_path / name)
            np.testing.assert_array_equal(back.values, vol.values)

    def test_raw_payload_is_x_fastest_little_endian(self, tmp_path):
        vol = ScalarVolume.from_flat(np.arange(8.0), (2, 2, 2))
        _, rp = save_volume(vol, tmp_path / "v", dtype="int16")
        raw = np.frombuffer(open(rp, "rb").read(), "<i2")
        np.testing.assert_array_equal(raw, np.arange(8))

    def test_sidecar_fields(self, tmp_path):
        vol = ScalarVolume(np.zeros((2, 3, 4)), spacing=(1, 2, 3), origin=(4, 5, 6))
        jp, _ = save_volume(vol, tmp_path / "v", dtype="float32")
        header = json.loads(open(jp).read())
        assert header == {
            "dims": [2, 3, 4],
            "spacing": [1.0, 2.0, 3.0],
            "origin": [4.0, 5.0, 6.0],
            "dtype": "float32",
        }

    def test_int16_overflow_rejected(self, tmp_path):
        vol = ScalarVolume(np.full((2, 2, 2), 1e6))
        with pytest.raises(ValueError, match="int16"):
            save_volume(vol, tmp_path / "v", dtype="int16")

    def test_unknown_dtype_rejected(self, tmp_path):
        vol = ScalarVolume(np.zeros((2, 2, 2)))
        with pytest.raises(ValueError, match="dtype"):
            save_volume(vol, tmp_path / "v", dtype="float64")

    def test_truncated_raw_rejected(self, tmp_path):
        vol = ScalarVolume(np.zeros((3, 3, 3)))
        jp, rp = save_volume(vol, tmp_path / "v")
        raw = open(rp, "rb").read()
        open(rp, "wb").write(raw[:-4])
        with pytest.raises(MeshFormatError, match="expected 108"):
            load_volume(jp)

    def test_missing_header_key_rejected(self, tmp_path):
        vol = ScalarVolume(np.zeros((2, 2, 2)))
        jp, _ = save_volume(vol, tmp_path / "v")
        header = json.loads(open(jp).read())
        del header["spacing"]
        open(jp, "w").write(json.dumps(header))
        with pytest.raises(MeshFormatError, match="'spacing'"):
            load_volume(jp)

    def test_bad_json_rejected(self, tmp_path):
        vol = ScalarVolume(np.zeros((2, 2, 2)))
        jp, _ = save_volume(vol, tmp_path / "v")
        open(jp, "w").write("{not json")
        with pytest.raises(MeshFormatError, match="JSON"):
            load_volume(jp)


# ---------------------------------------------------------------------------
# isosurface extraction
# ---------------------------------------------------------------------------

class TestExtractIsosurface:
    def test_sphere_vertices_near_analytic_radius(self):
        vol, c, r = sphere_volume(32, s=1.0, radius_voxels=10.0)
        mesh = extract_isosurface(vol, -r)
        radii = np.linalg.norm(mesh.vertices - c, axis=1)
        half_diag = 0.5 * np.sqrt(3.0)
        assert np.abs(radii - r).max() <= half_diag
        # linear interpolation of an exact distance field is much tighter
        assert np.abs(radii - r).max() < 0.05

    def test_sphere_anisotropic_spacing_and_origin(self):
        n = 24
        sp = np.array([0.5, 0.8, 1.1])
        org = np.array([3.0, -2.0, 7.0])
        ii = np.arange(n)
        x, y, z = np.meshgrid(*(ii * s + o for s, o in zip(sp, org)), indexing="ij")
        center = org + sp * (n // 2)
        dist = np.sqrt(
            (x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2
        )
        vol = ScalarVolume(-dist, spacing=tuple(sp), origin=tuple(org))
        mesh = extract_isosurface(vol, -5.0)
        radii = np.linalg.norm(mesh.vertices - center, axis=1)
        assert np.abs(radii - 5.0).max() <= 0.5 * np.linalg.norm(sp)

    def test_interpolated_value_matches_threshold(self):
        # a marching-cubes vertex lies on a grid edge, where trilinear
        # interpolation degenerates to the 1-D interpolation that placed it
        rng = np.random.default_rng(8)
        vals = rng.normal(size=(9, 9, 9))
        vol = ScalarVolume(vals)
        thr = 0.1
        mesh = extract_isosurface(vol, thr)
        interp = trilinear(vol, mesh.vertices)
        rng_span = vals.max() - vals.min()
        assert np.abs(interp - thr).max() <= 1e-6 * rng_span

    def test_slab_two_parallel_sheets(self):
        # values = 2.5 - |iy - 16| crosses 0 at |iy - 16| = 2.5, i.e. the
        # analytic planes y = 13.5 and y = 18.5
        iy = np.meshgrid(np.arange(12), np.arange(32), np.arange(12), indexing="ij")[1]
        vol = ScalarVolume(2.5 - np.abs(iy - 16.0))
        mesh = extract_isosurface(vol, 0.0)
        ys = mesh.vertices[:, 1]
        lower = ys < 16.0
        assert np.abs(ys[lower] - 13.5).max() <= 0.5
        assert np.abs(ys[~lower] - 18.5).max() <= 0.5
        # exact for a piecewise-linear field
        assert np.abs(ys[lower] - 13.5).max() < 1e-12
        assert np.abs(ys[~lower] - 18.5).max() < 1e-12
        # two disjoint sheets: no triangle spans both
        tri_y = ys[mesh.triangles]
        assert np.all((tri_y < 16).all(axis=1) | (tri_y > 16).all(axis=1))

    def test_watertight_sphere_euler_characteristic(self):
        vol, _, r = sphere_volume(32, s=1.0, radius_voxels=10.25)
        mesh = extract_isosurface(vol, -r)
        uniq, counts = edge_statistics(mesh)
        assert np.all(counts == 2)
        assert mesh.n_vertices - len(uniq) + mesh.n_triangles == 2

    def test_watertight_even_when_level_set_grazes_grid_points(self):
        # threshold exactly equal to grid values welds vertices onto those
        # grid points; connectivity must survive
        vol, _, r = sphere_volume(32, s=1.0, radius_voxels=10.0)
        mesh = extract_isosurface(vol, -10.0)
        uniq, counts = edge_statistics(mesh)
        assert np.all(counts == 2)
        assert mesh.n_vertices - len(uniq) + mesh.n_triangles == 2

    def test_consistent_winding(self):
        # across every interior edge the two incident triangles traverse it
        # in opposite directions
        vol, _, r = sphere_volume(24, s=1.0, radius_voxels=7.25)
        mesh = extract_isosurface(vol, -r)
        directed = mesh.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        uniq, counts = np.unique(directed, axis=0, return_counts=True)
        assert np.all(counts == 1)

    def test_default_orientation_points_into_below_threshold_region(self):
        # below threshold = outside the sphere, so normals must be radial
        vol, c, r = sphere_volume(32, s=1.0, radius_voxels=10.25)
        mesh = extract_isosurface(vol, -r)
        s = mesh_to_point_set(mesh)
        radial = mesh.vertices - c
        radial /= np.linalg.norm(radial, axis=1, keepdims=True)
        assert ((s.normals * radial).sum(axis=1) > 0.9).all()

    def test_flipped_orientation(self):
        vol, c, r = sphere_volume(32, s=1.0, radius_voxels=10.25)
        mesh = extract_isosurface(vol, -r, orientation="below_to_above")
        s = mesh_to_point_set(mesh)
        radial = mesh.vertices - c
        radial /= np.linalg.norm(radial, axis=1, keepdims=True)
        assert ((s.normals * radial).sum(axis=1) < -0.9).all()

    def test_bad_orientation_name(self):
        vol, _, r = sphere_volume(16, radius_voxels=5.0)
        with pytest.raises(ValueError, match="orientation"):
            extract_isosurface(vol, -r, orientation="outward")

    def test_sphere_area_close_to_analytic(self):
        vol, _, r = sphere_volume(64, s=0.5, radius_voxels=20.0)
        mesh = extract_isosurface(vol, -r)
        assert mesh.area() == pytest.approx(4.0 * np.pi * r * r, rel=0.02)

    def test_constant_volume_rejected(self):
        vol = ScalarVolume(np.full((4, 4, 4), 3.0))
        with pytest.raises(EmptyLevelSet, match="constant"):
            extract_isosurface(vol, 3.0)

    def test_threshold_outside_range_rejected(self):
        vol, _, _ = sphere_volume(16, radius_voxels=5.0)
        with pytest.raises(ValueError, match="outside"):
            extract_isosurface(vol, 1.0)
        with pytest.raises(ValueError, match="outside"):
            extract_isosurface(vol, vol.values.min())

    def test_exact_plateau_extracted_as_welded_planes(self):
        # grid planes sitting exactly at the threshold belong to the level
        # set; their vertices weld onto the grid points, producing flat
        # sheets at x = 1 and x = 3 exactly
        profile = np.array([0.0, 1.0, 2.0, 1.0, 0.0])
        vol = ScalarVolume(np.broadcast_to(profile[:, None, None], (5, 4, 4)).copy())
        mesh = extract_isosurface(vol, 1.0)
        xs = np.unique(mesh.vertices[:, 0])
        np.testing.assert_array_equal(xs, [1.0, 3.0])
        assert mesh.area() == pytest.approx(2 * 3 * 3, abs=1e-12)

    def test_deterministic_output(self):
        vol, _, r = sphere_volume(24, radius_voxels=7.0)
        a = extract_isosurface(vol, -r)
        b = extract_isosurface(vol, -r)
        np.testing.assert_array_equal(a.vertices, b.vertices)
        np.testing.assert_array_equal(a.triangles, b.triangles)

    def test_vertices_emitted_slab_major(self):
        vol, _, r = sphere_volume(24, radius_voxels=7.25)
        mesh = extract_isosurface(vol, -r)
        # every vertex sits on a grid edge; its owning slab is floor(z),
        # and emission never goes back to an earlier slab
        assert np.all(np.diff(np.floor(mesh.vertices[:, 2])) >= 0)

    def test_round_trip_through_file(self, tmp_path):
        vol, _, r = sphere_volume(16, radius_voxels=5.0)
        jp, _ = save_volume(vol, tmp_path / "v", dtype="float32")
        back = load_volume(jp)
        a = extract_isosurface(vol, -r)
        b = extract_isosurface(back, -r)
        # float32 payload quantizes values, so compare shape not bits
        assert a.n_vertices == b.n_vertices
        np.testing.assert_allclose(a.vertices, b.vertices, atol=1e-5)
