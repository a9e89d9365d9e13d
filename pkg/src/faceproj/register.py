"""Rigid registration: landmark least-squares solve and ICP refinement.

The landmark solve is the classic centroid-subtraction + SVD construction
(Kabsch) with a determinant correction, so it always returns a proper
rotation minimizing sum ||T x_j - y_j||^2.

ICP is point-to-point: each iteration matches every source point to its
nearest destination point through a k-d tree built once (the destination
set is static), then re-solves the rigid transform on those pairs. The
recorded residual sequence is non-increasing by the usual two-half-step
argument, and RegistrationReport enforces that invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .errors import (
    DegenerateConfiguration,
    EmptySubsurface,
    InsufficientLandmarks,
    NoCorrespondences,
)
from .geometry import RigidTransform, SurfacePointSet, as_points
from .landmarks import LandmarkSet3D


@dataclass(frozen=True)
class IcpConfig:
    """Iteration budget and stopping behavior for ``icp_refine``."""

    max_iterations: int = 50
    tolerance: float = 1e-4
    max_correspondence_distance: float = math.inf
    leaf_size: int = 16

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.tolerance > 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if not self.max_correspondence_distance > 0.0:
            raise ValueError("max_correspondence_distance must be positive")
        if self.leaf_size < 1:
            raise ValueError(f"leaf_size must be >= 1, got {self.leaf_size}")


@dataclass(frozen=True)
class RegistrationReport:
    """Outcome of a registration run.

    ``residuals[i]`` is the RMS point-to-correspondence distance measured
    at the start of iteration i (before that iteration's re-solve); the
    final entry is measured at the returned transform.
    """

    initial_transform: RigidTransform
    final_transform: RigidTransform
    residuals: tuple[float, ...]
    iterations: int
    e_sup: float
    e_mean: float

    def __post_init__(self):
        r = tuple(float(x) for x in self.residuals)
        if not r:
            raise ValueError("residuals must be non-empty")
        diffs = np.diff(r)
        if diffs.size and diffs.max() > 1e-9:
            k = int(np.argmax(diffs > 1e-9))
            raise ValueError(
                f"residuals increase at step {k + 1}: {r[k]:.12g} -> {r[k + 1]:.12g}"
            )
        object.__setattr__(self, "residuals", r)
        object.__setattr__(self, "iterations", int(self.iterations))
        object.__setattr__(self, "e_sup", float(self.e_sup))
        object.__setattr__(self, "e_mean", float(self.e_mean))

    def to_dict(self) -> dict:
        return {
            "initial_transform": self.initial_transform.as_matrix().tolist(),
            "final_transform": self.final_transform.as_matrix().tolist(),
            "residuals": list(self.residuals),
            "iterations": self.iterations,
            "e_sup": self.e_sup,
            "e_mean": self.e_mean,
        }


def _solve_rigid(src: np.ndarray, dst: np.ndarray, context: str) -> RigidTransform:
    """Kabsch solve on paired points; raises on rank-deficient geometry."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    a = src - cs
    b = dst - cd
    for name, pts in (("source", a), ("destination", b)):
        # eigenvalues of the 3x3 covariance, ascending: lambda_mid ~ 0
        # relative to lambda_max means the points sit on a line
        w = np.linalg.eigvalsh(pts.T @ pts)
        if w[2] <= 0.0 or w[1] <= 1e-9 * w[2]:
            raise DegenerateConfiguration(
                f"{context}: {name} points are collinear within tolerance "
                f"(covariance eigenvalues {w.tolist()})"
            )
    h = a.T @ b
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, cd - r @ cs)


def solve_landmark_transform(src: LandmarkSet3D, dst: LandmarkSet3D) -> RigidTransform:
    """Least-squares rigid transform mapping src landmarks onto dst.

    Uses the landmarks whose indices appear in both sets; at least three
    are required and they must not be collinear.
    """
    common = np.intersect1d(src.indices, dst.indices)
    if len(common) < 3:
        raise InsufficientLandmarks(
            f"need >= 3 common landmarks, got {len(common)} "
            f"(src {list(src.indices)}, dst {list(dst.indices)})"
        )
    a = src.select(common).points
    b = dst.select(common).points
    return _solve_rigid(a, b, "landmark solve")


def select_subsurface(
    s: SurfacePointSet, landmarks: LandmarkSet3D, radius: float = 25.0
) -> SurfacePointSet:
    """Points of ``s`` within ``radius`` of any landmark, order preserved."""
    if not radius > 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    if len(landmarks.points) == 0:
        raise ValueError("landmark set is empty")
    tree = cKDTree(landmarks.points)
    dist, _ = tree.query(s.points, k=1)
    mask = dist <= radius
    if not mask.any():
        raise EmptySubsurface(
            f"no surface point within {radius} of any of "
            f"{len(landmarks.points)} landmarks"
        )
    return s.subset(mask)


def nearest_neighbors(
    query: np.ndarray, targets: np.ndarray, tree: cKDTree | None = None
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Exact nearest neighbor of each query point among targets.

    Returns (distances, indices). Distances are recomputed in plain
    arithmetic after the tree lookup, so they equal a brute-force scan
    bit for bit; exact distance ties resolve to the lowest target index.
    """
    query = as_points(query)
    targets = as_points(targets)
    if tree is None:
        tree = cKDTree(targets)
    k = min(2, len(targets))
    _, nn = tree.query(query, k=k)
    nn = nn.reshape(len(query), k)
    best = nn[:, 0]
    best_sq = ((query - targets[best]) ** 2).sum(axis=1)
    if k == 2:
        second = nn[:, 1]
        second_sq = ((query - targets[second]) ** 2).sum(axis=1)
        closer = second_sq < best_sq
        tie = second_sq == best_sq
        best = np.where(closer | (tie & (second < best)), second, best)
        best_sq = np.where(closer, second_sq, best_sq)
        # an exact two-way tie may hide more equidistant targets; scan the
        # tied radius exhaustively for those rows
        for i in np.nonzero(tie)[0]:
            r = math.sqrt(best_sq[i])
            cand = tree.query_ball_point(query[i], r * (1.0 + 1e-12) + 1e-300)
            sq = ((targets[cand] - query[i]) ** 2).sum(axis=1)
            exact = sq == sq.min()
            best[i] = min(int(cand[j]) for j in np.nonzero(exact)[0])
            best_sq[i] = sq.min()
    return np.sqrt(best_sq), best


def icp_refine(
    src: SurfacePointSet,
    dst: SurfacePointSet,
    init: RigidTransform | None = None,
    cfg: IcpConfig | None = None,
) -> RegistrationReport:
    """Iterative closest point from ``src`` onto ``dst`` starting at ``init``.

    Correspondences always target ``dst`` (indexed once); each iteration
    re-solves the full transform on the matched pairs. Stops after
    ``cfg.max_iterations`` or when the RMS residual improves by less than
    ``cfg.tolerance`` between consecutive iterations.
    """
    if init is None:
        init = RigidTransform.identity()
    if cfg is None:
        cfg = IcpConfig()
    if len(src) == 0 or len(dst) == 0:
        raise EmptySubsurface("both point sets must be non-empty")

    tree = cKDTree(dst.points, leafsize=cfg.leaf_size)
    transform = init
    residuals: list[float] = []
    iterations = 0
    converged = False
    for _ in range(cfg.max_iterations):
        iterations += 1
        moved = transform.apply_points(src.points)
        dist, nn = nearest_neighbors(moved, dst.points, tree)
        mask = dist <= cfg.max_correspondence_distance
        if not mask.any():
            raise NoCorrespondences(
                f"all {len(dist)} correspondences exceed "
                f"{cfg.max_correspondence_distance}; nearest is {dist.min():.6g}"
            )
        residuals.append(float(np.sqrt(np.mean(dist[mask] ** 2))))
        if residuals[-1] == 0.0:
            converged = True
            break
        if len(residuals) >= 2 and abs(residuals[-2] - residuals[-1]) < cfg.tolerance:
            converged = True
            break
        transform = _solve_rigid(src.points[mask], dst.points[nn[mask]], "icp re-solve")
    if not converged:
        # the last re-solve has not been evaluated yet; score it so the
        # report reflects the transform actually returned
        moved = transform.apply_points(src.points)
        dist, nn = nearest_neighbors(moved, dst.points, tree)
        mask = dist <= cfg.max_correspondence_distance
        if mask.any():
            residuals.append(float(np.sqrt(np.mean(dist[mask] ** 2))))
    return RegistrationReport(
        initial_transform=init,
        final_transform=transform,
        residuals=tuple(residuals),
        iterations=iterations,
        e_sup=float(dist.max()),
        e_mean=float(dist.mean()),
    )
