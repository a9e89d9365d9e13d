"""Landmark containers: indexed 2D detections and lifted 3D points.

Landmark indices follow the common 68-point facial annotation. The
default registration subset covers the nose bridge, nose base, and
inner-eye region: the part of a face with the least geometric change
between a CT-derived soft-tissue surface and an optical face scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .geometry import as_points

# Nose-bridge (27-30), nose-base (31, 33, 35) and eye-corner (36, 39, 42)
# indices of the 68-point annotation; configurable wherever it is consumed.
DEFAULT_SUBSET: tuple[int, ...] = (27, 28, 29, 30, 31, 33, 35, 36, 39, 42)


@dataclass(frozen=True)
class Landmark2D:
    """One detected landmark: pixel position plus its world-mm mapping.

    ``x_world`` is the rotated-frame x coordinate and ``z_world`` the world
    z coordinate obtained through the projection calibration.
    """

    index: int
    col: float
    row: float
    x_world: float
    z_world: float


@dataclass(frozen=True)
class LandmarkSet2D:
    """Landmarks detected in one projection image, sorted by index.

    ``source_phi`` is the rotation angle (radians) at which the image was
    rendered. ``excluded`` lists landmark indices that could not be
    detected (off-raster, invisible) and were dropped.
    """

    landmarks: tuple[Landmark2D, ...]
    source_phi: float
    excluded: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        object.__setattr__(self, "excluded", tuple(self.excluded))
        idx = [lm.index for lm in self.landmarks]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"landmark indices must be strictly increasing, got {idx}")
        if not np.isfinite(self.source_phi):
            raise ValueError("source_phi must be finite")

    def __len__(self) -> int:
        return len(self.landmarks)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(lm.index for lm in self.landmarks)

    @property
    def x_world(self) -> NDArray[np.float64]:
        return np.array([lm.x_world for lm in self.landmarks])

    @property
    def z_world(self) -> NDArray[np.float64]:
        return np.array([lm.z_world for lm in self.landmarks])

    def get(self, index: int) -> Landmark2D:
        for lm in self.landmarks:
            if lm.index == index:
                return lm
        raise KeyError(f"no landmark with index {index}")


@dataclass(frozen=True)
class LandmarkSet3D:
    """Indexed 3D landmarks in world mm.

    ``quality`` stores the per-landmark z-discrepancy (mm) between the two
    views a landmark was lifted from (zero for ground-truth sets).
    ``normals`` is optional and carried only by synthetic ground truth.
    ``dropped`` lists indices that failed to lift and were excluded.
    """

    indices: tuple[int, ...]
    points: NDArray[np.float64]
    quality: NDArray[np.float64] | None = None
    normals: NDArray[np.float64] | None = None
    dropped: tuple[int, ...] = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"landmark indices must be strictly increasing, got {idx}")
        pts = as_points(self.points)
        if pts.shape[0] != len(idx):
            raise ValueError("points and indices lengths differ")
        pts = np.ascontiguousarray(pts)
        pts.flags.writeable = False
        q = self.quality
        q = np.zeros(len(idx)) if q is None else np.asarray(q, dtype=np.float64).reshape(len(idx))
        q.flags.writeable = False
        nrm = self.normals
        if nrm is not None:
            nrm = as_points(nrm)
            if nrm.shape != pts.shape:
                raise ValueError("normals shape must match points")
            nrm = np.ascontiguousarray(nrm)
            nrm.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "quality", q)
        object.__setattr__(self, "normals", nrm)
        object.__setattr__(self, "dropped", tuple(self.dropped))

    def __len__(self) -> int:
        return len(self.indices)

    def point_for(self, index: int) -> NDArray[np.float64]:
        try:
            pos = self.indices.index(index)
        except ValueError:
            raise KeyError(f"no landmark with index {index}") from None
        return self.points[pos]

    def select(self, indices: ArrayLike) -> "LandmarkSet3D":
        """Keep only the given landmark indices (missing ones raise KeyError)."""
        wanted = sorted(int(i) for i in indices)
        pos = [self.indices.index(i) if i in self.indices else -1 for i in wanted]
        missing = [i for i, p in zip(wanted, pos) if p < 0]
        if missing:
            raise KeyError(f"landmarks not present: {missing}")
        pts = self.points[pos]
        q = self.quality[pos]
        nrm = None if self.normals is None else self.normals[pos]
        return LandmarkSet3D(tuple(wanted), pts, q, nrm)
