"""Scalar volumes and isosurface extraction.

Volumes live on a regular grid: voxel (i, j, k) sits at world position
``origin + (i, j, k) * spacing``. On disk a volume is a JSON sidecar
(dims, spacing, origin, dtype) next to a raw little-endian payload in
x-fastest order.

``extract_isosurface`` is the classic 256-case marching cubes without the
asymptotic-decider disambiguation. Vertices are emitted in slab-major
(z, y, x) order and shared between adjacent cubes, so output is fully
deterministic for a given volume and threshold.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import EmptyLevelSet, MeshFormatError
from .mc_tables import CORNER_OFFSETS, EDGE_CROSSINGS, EDGE_ENDPOINTS, TRIANGLE_TABLE
from .meshio import TriangleMesh

_VOLUME_DTYPES = {"int16": "<i2", "float32": "<f4"}


@dataclass(frozen=True)
class ScalarVolume:
    """Immutable scalar field on a regular grid, indexed values[ix, iy, iz]."""

    values: NDArray[np.float64]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"values must be a 3-D array, got shape {v.shape}")
        if min(v.shape) < 2:
            raise ValueError(f"each dimension must be >= 2, got dims {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("volume contains non-finite values")
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or len(origin) != 3:
            raise ValueError("spacing and origin must have 3 components")
        if min(spacing) <= 0.0:
            raise ValueError(f"spacing must be positive, got {spacing}")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @classmethod
    def from_flat(cls, flat, dims, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
        """Build from a flat x-fastest value sequence of length nx*ny*nz."""
        nx, ny, nz = (int(d) for d in dims)
        a = np.asarray(flat, dtype=np.float64).reshape(-1)
        if a.size != nx * ny * nz:
            raise ValueError(f"expected {nx * ny * nz} values, got {a.size}")
        return cls(a.reshape((nx, ny, nz), order="F"), spacing, origin)


def _volume_paths(path):
    base, ext = os.path.splitext(str(path))
    if ext not in ("", ".json", ".raw"):
        base = str(path)
    return base + ".json", base + ".raw"


def save_volume(vol: ScalarVolume, path, dtype: str = "float32"):
    """Write ``<base>.json`` + ``<base>.raw``; returns the two paths.

    ``dtype`` selects the raw payload encoding; int16 rounds to nearest.
    """
    if dtype not in _VOLUME_DTYPES:
        raise ValueError(f"dtype must be one of {sorted(_VOLUME_DTYPES)}, got {dtype!r}")
    json_path, raw_path = _volume_paths(path)
    header = {
        "dims": list(vol.dims),
        "spacing": list(vol.spacing),
        "origin": list(vol.origin),
        "dtype": dtype,
    }
    flat = vol.values.flatten(order="F")
    if dtype == "int16":
        flat = np.round(flat)
        if flat.min() < -32768 or flat.max() > 32767:
            raise ValueError("values exceed int16 range; save as float32")
    with open(json_path, "w", encoding="ascii") as f:
        f.write(json.dumps(header, sort_keys=True, indent=2) + "\n")
    with open(raw_path, "wb") as f:
        f.write(flat.astype(_VOLUME_DTYPES[dtype]).tobytes())
    return json_path, raw_path


def load_volume(path) -> ScalarVolume:
    json_path, raw_path = _volume_paths(path)
    with open(json_path, "rb") as f:
        try:
            header = json.loads(f.read())
        except ValueError as e:
            raise MeshFormatError(f"{json_path}: invalid JSON: {e}", offset=0) from None
    for key in ("dims", "spacing", "origin", "dtype"):
        if key not in header:
            raise MeshFormatError(f"{json_path}: missing key {key!r}", offset=0)
    if header["dtype"] not in _VOLUME_DTYPES:
        raise MeshFormatError(
            f"{json_path}: unsupported dtype {header['dtype']!r}", offset=0
        )
    nx, ny, nz = (int(d) for d in header["dims"])
    with open(raw_path, "rb") as f:
        raw = f.read()
    dt = np.dtype(_VOLUME_DTYPES[header["dtype"]])
    expected = nx * ny * nz * dt.itemsize
    if len(raw) != expected:
        raise MeshFormatError(
            f"{raw_path}: payload is {len(raw)} bytes, expected {expected}",
            offset=min(len(raw), expected),
        )
    flat = np.frombuffer(raw, dt)
    return ScalarVolume.from_flat(flat, (nx, ny, nz), header["spacing"], header["origin"])


# ---------------------------------------------------------------------------
# marching cubes
# ---------------------------------------------------------------------------

# each cube edge spans one grid axis; precompute that axis and the grid
# offset of the edge's low corner so local edges map to global edge keys
_EDGE_AXIS = np.empty(12, dtype=np.int64)
_EDGE_BASE = np.empty((12, 3), dtype=np.int64)
for _e, (_a, _b) in enumerate(EDGE_ENDPOINTS):
    _d = CORNER_OFFSETS[_b] - CORNER_OFFSETS[_a]
    _EDGE_AXIS[_e] = int(np.nonzero(_d)[0][0])
    _EDGE_BASE[_e] = np.minimum(CORNER_OFFSETS[_a], CORNER_OFFSETS[_b])

_ORIENTATIONS = ("above_to_below", "below_to_above")


def extract_isosurface(
    vol: ScalarVolume, threshold: float, orientation: str = "above_to_below"
) -> TriangleMesh:
    """Triangulate the level set {value = threshold} of ``vol``.

    Vertex positions are linearly interpolated along crossing edges and
    shared between the (up to four) cubes that touch an edge. With the
    default orientation, triangle winding puts right-hand normals pointing
    from the above-threshold region into the below-threshold region.
    """
    if orientation not in _ORIENTATIONS:
        raise ValueError(f"orientation must be one of {_ORIENTATIONS}, got {orientation!r}")
    values = vol.values
    nx, ny, nz = vol.dims
    vmin, vmax = float(values.min()), float(values.max())
    if vmin == vmax:
        raise EmptyLevelSet(f"constant volume (value {vmin}) has no level set")
    threshold = float(threshold)
    if not vmin < threshold < vmax:
        raise ValueError(
            f"threshold {threshold} outside open value range ({vmin}, {vmax})"
        )

    below = values < threshold
    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.uint8)
    for bit, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
        view = below[ox : ox + nx - 1, oy : oy + ny - 1, oz : oz + nz - 1]
        case |= view.astype(np.uint8) << bit

    active = np.nonzero(EDGE_CROSSINGS[case] != 0)
    if len(active[0]) == 0:
        raise EmptyLevelSet(f"no cube crosses threshold {threshold}")
    cx, cy, cz = (a.astype(np.int64) for a in active)
    rows = TRIANGLE_TABLE[case[active]]  # (A, 16)

    # flatten to one row per candidate triangle, keyed by owning cube
    tri_edges = rows[:, :15].reshape(-1, 3)
    valid = tri_edges[:, 0] >= 0
    tri_edges = tri_edges[valid].astype(np.int64)
    cube_idx = np.repeat(np.arange(len(cx)), 5)[valid]

    # four key slots per grid point: one per outgoing edge axis plus one
    # for the point itself, so ascending key order is exactly slab-major
    # vertex emission
    jx = (cx[cube_idx][:, None] + _EDGE_BASE[tri_edges, 0]).reshape(-1)
    jy = (cy[cube_idx][:, None] + _EDGE_BASE[tri_edges, 1]).reshape(-1)
    jz = (cz[cube_idx][:, None] + _EDGE_BASE[tri_edges, 2]).reshape(-1)
    axis = _EDGE_AXIS[tri_edges].reshape(-1)
    step = np.eye(3, dtype=np.int64)[axis]
    v0 = values[jx, jy, jz]
    v1 = values[jx + step[:, 0], jy + step[:, 1], jz + step[:, 2]]
    t = (threshold - v0) / (v1 - v0)

    # a corner value equal to the threshold puts the vertex exactly on a
    # grid point; weld it there so every incident cube shares one vertex
    lin = (jz * ny + jy) * nx + jx
    lin_hi = lin + step[:, 0] + step[:, 1] * nx + step[:, 2] * nx * ny
    keys = np.where(t == 1.0, lin_hi * 4 + 3, np.where(t == 0.0, lin * 4 + 3, lin * 4 + axis))
    grid = np.column_stack([jx, jy, jz]).astype(np.float64) + t[:, None] * step
    positions = np.asarray(vol.origin) + grid * np.asarray(vol.spacing)

    unique_keys, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    triangles = inverse.reshape(-1, 3)
    verts = positions[first]

    if orientation == "below_to_above":
        triangles = triangles[:, [0, 2, 1]]

    # a corner value landing exactly on the threshold collapses the two
    # incident edge vertices of a triangle; drop those slivers
    a, b, c = verts[triangles[:, 0]], verts[triangles[:, 1]], verts[triangles[:, 2]]
    area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    triangles = triangles[area2 > 0.0]
    if len(triangles) == 0:
        raise EmptyLevelSet(f"level set at {threshold} degenerates to measure zero")
    used = np.unique(triangles)
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh(verts[used], remap[triangles].astype(np.int32))
