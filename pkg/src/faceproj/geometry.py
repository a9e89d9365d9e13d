"""Core 3D types: point sets, z-axis rotations, rigid transforms, normals.

Coordinate conventions used throughout the package:

- right-handed frame, all lengths in millimetres;
- a face surface is oriented toward +y (the projection plane sits at
  y = d beyond the surface);
- angles are radians everywhere in the library (the CLI accepts degrees
  via explicitly suffixed flags).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TypeAlias

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from .errors import DegenerateNeighborhood

Vec3: TypeAlias = NDArray[np.float64]    # shape (3,)
Mat3: TypeAlias = NDArray[np.float64]    # shape (3, 3)
Points: TypeAlias = NDArray[np.float64]  # shape (N, 3)

_ORTHO_TOL = 1e-9


def as_point(p: ArrayLike) -> Vec3:
    """Coerce to a finite float64 vector of shape (3,)."""
    a = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"point has non-finite coordinates: {a}")
    return a


def as_points(pts: ArrayLike) -> Points:
    """Coerce to a finite float64 array of shape (N, 3)."""
    a = np.asarray(pts, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, 3)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("points contain non-finite coordinates")
    return a


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SurfacePointSet:
    """A 3D point cloud with optional per-point unit normals.

    ``points`` has shape (N, 3); ``normals``, when present, is a parallel
    (N, 3) array of unit vectors (norm 1 within 1e-9).
    """

    points: Points
    normals: Points | None = None

    def __post_init__(self):
        pts = _readonly(as_points(self.points))
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = as_points(self.normals)
            if nrm.shape != pts.shape:
                raise ValueError(
                    f"normals shape {nrm.shape} does not match points {pts.shape}"
                )
            norms = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                worst = int(np.argmax(np.abs(norms - 1.0)))
                raise ValueError(
                    f"normal {worst} is not unit length (|n| = {norms[worst]!r})"
                )
            object.__setattr__(self, "normals", _readonly(nrm))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def subset(self, mask_or_indices) -> "SurfacePointSet":
        """Select points (and parallel normals) by boolean mask or index array."""
        pts = self.points[mask_or_indices]
        nrm = None if self.normals is None else self.normals[mask_or_indices]
        return SurfacePointSet(pts, nrm)


@dataclass(frozen=True)
class RigidTransform:
    """A proper rigid motion p -> R p + t (rotation + translation, mm).

    ``rotation`` must be orthogonal with determinant +1 within 1e-9.
    """

    rotation: Mat3
    translation: Vec3

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = as_point(self.translation)
        if not np.all(np.isfinite(R)):
            raise ValueError("rotation contains non-finite entries")
        if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("rotation matrix is not orthogonal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation matrix determinant is not +1 within 1e-9")
        object.__setattr__(self, "rotation", _readonly(R))
        object.__setattr__(self, "translation", _readonly(t))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m: ArrayLike) -> "RigidTransform":
        """Build from a 4x4 homogeneous matrix (row-major convention)."""
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-12:
            raise ValueError("last row of a rigid homogeneous matrix must be (0,0,0,1)")
        return RigidTransform(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> NDArray[np.float64]:
        """Return the 4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply_points(self, pts: ArrayLike) -> Points:
        pts = as_points(pts)
        return pts @ self.rotation.T + self.translation

    def apply_point(self, p: ArrayLike) -> Vec3:
        return self.rotation @ as_point(p) + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return the transform equivalent to applying ``other`` first, then self."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -(Rt @ self.translation))

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)


def rotation_about_z(phi: float) -> Mat3:
    """Rotation matrix for angle ``phi`` (radians) about the z-axis."""
    if not np.isfinite(phi):
        raise ValueError("rotation angle must be finite")
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotate_about_z(p: ArrayLike, phi: float) -> np.ndarray:
    """Rotate a point or (N, 3) array about the z-axis by ``phi`` radians.

    The z-coordinate is unchanged: (x, y, z) maps to
    (x cos(phi) - y sin(phi), x sin(phi) + y cos(phi), z).
    """
    a = np.asarray(p, dtype=np.float64)
    single = a.ndim == 1
    pts = as_points(a)
    out = pts @ rotation_about_z(phi).T
    return out[0] if single else out


def apply_transform(t: RigidTransform, s: SurfacePointSet) -> SurfacePointSet:
    """Apply a rigid transform to a point set; normals rotate, they do not translate."""
    if len(s) == 0:
        raise ValueError("cannot transform an empty point set")
    pts = t.apply_points(s.points)
    nrm = None if s.normals is None else s.normals @ t.rotation.T
    return SurfacePointSet(pts, nrm)


def estimate_normals(
    s: SurfacePointSet,
    k: int = 12,
    reference: ArrayLike = (0.0, 1.0, 0.0),
) -> SurfacePointSet:
    """Estimate unit normals from k-neighborhood covariances.

    Each normal is the eigenvector of the neighborhood covariance with the
    smallest eigenvalue, sign-oriented to have positive dot product with
    ``reference`` (a single outward direction, default +y, or an (N, 3)
    per-point array such as radial directions).

    Raises DegenerateNeighborhood, naming the point index, when a
    neighborhood is rank zero (all points coincident).
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    n = len(s)
    if n < 2:
        raise ValueError("need at least 2 points to estimate normals")
    k_eff = min(k, n - 1)

    ref = np.asarray(reference, dtype=np.float64)
    if ref.ndim == 1:
        ref = np.broadcast_to(ref.reshape(1, 3), (n, 3))
    elif ref.shape != (n, 3):
        raise ValueError(f"reference must be a 3-vector or ({n}, 3) array")

    tree = cKDTree(s.points)
    _, idx = tree.query(s.points, k=k_eff + 1)  # includes the point itself
    neigh = s.points[idx]                       # (n, k_eff+1, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)

    eigvals, eigvecs = np.linalg.eigh(cov)      # ascending eigenvalues
    # a neighborhood defines a tangent plane only if it spreads in two
    # directions: coincident (largest ~ 0) and collinear (middle ~ 0
    # relative to largest) clouds leave the normal ambiguous
    degenerate = (eigvals[:, 2] <= 1e-18) | (eigvals[:, 1] <= 1e-12 * eigvals[:, 2])
    if np.any(degenerate):
        bad = int(np.flatnonzero(degenerate)[0])
        raise DegenerateNeighborhood(
            f"neighborhood of point {bad} is degenerate (all points coincident)"
        )
    normals = eigvecs[:, :, 0]

    flip = np.einsum("ni,ni->n", normals, ref) < 0.0
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return SurfacePointSet(s.points, normals)
