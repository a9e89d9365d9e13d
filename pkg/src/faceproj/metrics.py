"""Registration quality metrics and the distance colormap export.

Conventions: landmark error is an RMS over index-matched pairs; surface
error is one-sided (per source point, the distance to its nearest target
point); signed distance takes its sign from the anchor set's outward
normals, with sgn(0) = +1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import LandmarkIndexMismatch
from .geometry import SurfacePointSet
from .landmarks import LandmarkSet3D
from .meshio import save_ply
from .register import nearest_neighbors


@dataclass(frozen=True)
class SurfaceErrorReport:
    """One-sided surface distances: per-point, their max, and their mean."""

    e_sup: float
    e_mean: float
    distances: NDArray[np.float64]
    signed: NDArray[np.float64] | None = None

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=np.float64)
        if d.ndim != 1 or d.size == 0:
            raise ValueError("distances must be a non-empty 1-D array")
        if d.min() < 0.0:
            raise ValueError("distances must be non-negative")
        if self.e_sup != d.max():
            raise ValueError(f"e_sup {self.e_sup} != max distance {d.max()}")
        if self.e_sup < self.e_mean:
            raise ValueError(f"e_sup {self.e_sup} < e_mean {self.e_mean}")
        d = np.ascontiguousarray(d)
        d.flags.writeable = False
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "e_sup", float(self.e_sup))
        object.__setattr__(self, "e_mean", float(self.e_mean))
        s = self.signed
        if s is not None:
            s = np.ascontiguousarray(np.asarray(s, dtype=np.float64))
            if s.shape != d.shape:
                raise ValueError("signed distances must parallel distances")
            s.flags.writeable = False
            object.__setattr__(self, "signed", s)

    def to_dict(self) -> dict:
        out = {
            "e_sup": self.e_sup,
            "e_mean": self.e_mean,
            "distances": self.distances.tolist(),
        }
        if self.signed is not None:
            out["signed"] = self.signed.tolist()
        return out


def point_error(a: LandmarkSet3D, b: LandmarkSet3D) -> float:
    """RMS distance between landmarks paired by index."""
    if not np.array_equal(a.indices, b.indices):
        raise LandmarkIndexMismatch(
            f"index sets differ: {list(a.indices)} vs {list(b.indices)}"
        )
    if len(a.indices) == 0:
        raise LandmarkIndexMismatch("landmark sets are empty")
    return float(np.sqrt(np.mean(((a.points - b.points) ** 2).sum(axis=1))))


def surface_error(
    x: SurfacePointSet, y: SurfacePointSet, signed: bool = False
) -> SurfaceErrorReport:
    """One-sided error of x against y: nearest-target distance per x point.

    With ``signed=True``, x must carry normals; the report additionally
    holds the per-point distances signed by x's normals.
    """
    if len(x) == 0 or len(y) == 0:
        raise ValueError("both point sets must be non-empty")
    dist, _ = nearest_neighbors(x.points, y.points)
    s = signed_distance(x, y) if signed else None
    return SurfaceErrorReport(
        e_sup=float(dist.max()), e_mean=float(dist.mean()), distances=dist, signed=s
    )


def signed_distance(y: SurfacePointSet, x: SurfacePointSet) -> NDArray[np.float64]:
    """Per-y-point distance to the nearest x point, signed by y's normal.

    Positive when the nearest point lies on the normal's side (the dot
    product's sgn, with sgn(0) defined as +1).
    """
    if not y.has_normals:
        raise ValueError("signed_distance requires normals on the anchor set")
    if len(x) == 0:
        raise ValueError("x must be non-empty")
    dist, nn = nearest_neighbors(y.points, x.points)
    dots = ((x.points[nn] - y.points) * y.normals).sum(axis=1)
    return np.where(dots >= 0.0, dist, -dist)


def distance_colors(d, distance_range: float) -> NDArray[np.uint8]:
    """Symmetric diverging colormap: -range blue, 0 white, +range red."""
    if not distance_range > 0.0:
        raise ValueError(f"distance_range must be positive, got {distance_range}")
    t = np.clip(np.asarray(d, dtype=np.float64) / distance_range, -1.0, 1.0)
    r = 255.0 * np.minimum(1.0, 1.0 + t)
    g = 255.0 * (1.0 - np.abs(t))
    b = 255.0 * np.minimum(1.0, 1.0 - t)
    return np.round(np.column_stack([r, g, b])).astype(np.uint8)


def export_distance_colormap(
    y: SurfacePointSet, d, distance_range: float, path, binary: bool = True
) -> None:
    """Write y as a PLY colored by the signed distances ``d``."""
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (len(y),):
        raise ValueError(f"need one distance per point: {d.shape} vs {len(y)} points")
    save_ply(
        path,
        y.points,
        normals=y.normals if y.has_normals else None,
        colors=distance_colors(d, distance_range),
        binary=binary,
    )
