"""Closed-form 3D landmark reconstruction from two rotated 2D views.

A point p with cylindrical radius L = sqrt(x^2 + y^2) observed in a view
rotated by phi about the z-axis projects to the rotated-frame abscissa

    x^phi = -L  sin(theta + phi),

where theta is the azimuth of p measured so that p = (-L sin theta,
L cos theta, z). Two views at different angles determine L and theta in
closed form, provided theta + phi stays in [-pi/2, pi/2] for both views
(the front-facing hemisphere); configurations outside it are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import InconsistentObservation, InsufficientLandmarks, LandmarkIndexMismatch
from .geometry import Vec3
from .landmarks import LandmarkSet2D, LandmarkSet3D

# Angle differences whose |sin| falls below this are unusable (division by
# sin(phi1 - phi2) in the closed form).
_MIN_SIN = 1e-6

# Angle-difference band outside which 3D landmark errors grow sharply:
# below, 2D noise is amplified by 1/|phi1 - phi2|; above, one of the two
# views sees landmarks at grazing incidence.
WARN_EPS_LOW = math.pi / 9
WARN_EPS_HIGH = math.pi / 3


@dataclass(frozen=True)
class AnglePair:
    """A validated pair of projection angles (radians)."""

    phi1: float
    phi2: float

    def __post_init__(self):
        if not (np.isfinite(self.phi1) and np.isfinite(self.phi2)):
            raise ValueError("projection angles must be finite")
        if abs(math.sin(self.phi1 - self.phi2)) <= _MIN_SIN:
            raise ValueError(
                f"|sin(phi1 - phi2)| = {abs(math.sin(self.phi1 - self.phi2)):.2e} "
                "is too small; the two views do not triangulate"
            )

    @property
    def delta(self) -> float:
        """Signed angle difference phi1 - phi2."""
        return self.phi1 - self.phi2

    @property
    def epsilon(self) -> float:
        """Absolute angle difference |phi1 - phi2|."""
        return abs(self.phi1 - self.phi2)

    @property
    def warning(self) -> str | None:
        """Human-readable warning when the pair sits in a high-error band."""
        if self.epsilon <= WARN_EPS_LOW:
            return (
                f"|phi1 - phi2| = {self.epsilon:.4f} rad <= pi/9: 2D detection "
                "noise is amplified by the inverse of the angle difference"
            )
        if self.epsilon >= WARN_EPS_HIGH:
            return (
                f"|phi1 - phi2| = {self.epsilon:.4f} rad >= pi/3: landmarks tend "
                "to face away from one of the two views"
            )
        return None


def default_angles() -> AnglePair:
    """The default view pair phi2 = -phi1 with |phi1 - phi2| = 2*pi/9."""
    return AnglePair(math.pi / 9, -math.pi / 9)


def _lift_arrays(
    x1: NDArray[np.float64],
    x2: NDArray[np.float64],
    angles: AnglePair,
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Vectorized closed form: returns (L, theta, front) for each observation pair.

    ``front`` is L*cos(theta + phi1), nonnegative exactly when the implied
    point lies in the front hemisphere of both formulas' validity range.
    """
    delta = angles.delta
    front = (x2 - x1 * math.cos(delta)) / math.sin(delta)
    radius = np.hypot(front, x1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(radius > 0.0, -x1 / np.maximum(radius, 1e-300), 0.0)
    ratio = np.clip(ratio, -1.0, 1.0)
    theta = np.arcsin(ratio) - angles.phi1
    return radius, theta, front


def lift_landmark(x1: float, x2: float, z: float, angles: AnglePair) -> Vec3:
    """Reconstruct a 3D point from its abscissae in two rotated views.

    ``x1`` and ``x2`` are the rotated-frame x coordinates (mm) observed at
    ``angles.phi1`` and ``angles.phi2``; ``z`` is the shared world z.

    Raises InconsistentObservation when the pair implies a point outside
    the front hemisphere (cos(theta + phi1) < 0), where the principal
    arcsine branch does not apply.
    """
    x1 = float(x1)
    x2 = float(x2)
    delta = angles.delta
    front = (x2 - x1 * math.cos(delta)) / math.sin(delta)
    radius = math.hypot(front, x1)

    if radius == 0.0:
        # Both observations vanish only for points on the rotation axis.
        if x1 != 0.0 or x2 != 0.0:
            raise InconsistentObservation(
                f"zero radius with nonzero observations x1={x1!r}, x2={x2!r}"
            )
        return np.array([0.0, 0.0, z])

    if front < 0.0:
        raise InconsistentObservation(
            f"observations x1={x1!r}, x2={x2!r} at phi1={angles.phi1!r}, "
            f"phi2={angles.phi2!r} imply a point behind the viewing hemisphere "
            "(cos(theta + phi1) < 0)"
        )

    ratio = -x1 / radius
    if abs(ratio) > 1.0 + 1e-9:
        raise InconsistentObservation(
            f"arcsine argument {ratio!r} out of range for x1={x1!r}, x2={x2!r}"
        )
    ratio = min(1.0, max(-1.0, ratio))
    theta = math.asin(ratio) - angles.phi1
    return np.array([-radius * math.sin(theta), radius * math.cos(theta), z])


def lift_batch(
    x1,
    x2,
    z,
    angles: AnglePair,
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Vectorized lift of many observation pairs.

    Returns (points, ok): rows of ``points`` with ``ok`` False are NaN and
    correspond to observation pairs outside the front hemisphere.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    radius, theta, front = _lift_arrays(x1, x2, angles)
    ok = (front >= 0.0) | (radius == 0.0)
    pts = np.stack(
        [-radius * np.sin(theta), radius * np.cos(theta), np.broadcast_to(z, radius.shape)],
        axis=-1,
    ).copy()
    pts[~ok] = np.nan
    return pts, ok


def lift_landmark_set(
    a: LandmarkSet2D,
    b: LandmarkSet2D,
    *,
    allow_partial: bool = False,
    on_invalid: str = "raise",
) -> LandmarkSet3D:
    """Lift two 2D landmark sets (same indices, different angles) to 3D.

    The shared z of each landmark is the mean of the two views' z_world;
    the absolute discrepancy |z_a - z_b| is recorded as the landmark's
    quality score.

    ``allow_partial`` lifts the index intersection instead of requiring
    identical index sets. ``on_invalid`` controls per-landmark hemisphere
    failures: "raise" propagates, "drop" excludes the landmark and records
    it in the result's ``dropped``.
    """
    if on_invalid not in ("raise", "drop"):
        raise ValueError(f"on_invalid must be 'raise' or 'drop', got {on_invalid!r}")
    angles = AnglePair(a.source_phi, b.source_phi)

    ia, ib = set(a.indices), set(b.indices)
    common = sorted(ia & ib)
    if len(common) < 3:
        raise InsufficientLandmarks(
            f"only {len(common)} landmark indices in common; need at least 3"
        )
    if (ia != ib) and not allow_partial:
        raise LandmarkIndexMismatch(
            f"index sets differ: missing from first = {sorted(ib - ia)}, "
            f"missing from second = {sorted(ia - ib)}"
        )

    indices: list[int] = []
    points: list[np.ndarray] = []
    quality: list[float] = []
    dropped: list[int] = []
    for j in common:
        la, lb = a.get(j), b.get(j)
        z = 0.5 * (la.z_world + lb.z_world)
        try:
            p = lift_landmark(la.x_world, lb.x_world, z, angles)
        except InconsistentObservation:
            if on_invalid == "raise":
                raise
            dropped.append(j)
            continue
        indices.append(j)
        points.append(p)
        quality.append(abs(la.z_world - lb.z_world))

    if len(indices) < 3:
        raise InsufficientLandmarks(
            f"only {len(indices)} landmarks lifted successfully "
            f"({len(dropped)} dropped); need at least 3"
        )
    return LandmarkSet3D(
        tuple(indices), np.array(points), np.array(quality), dropped=tuple(dropped)
    )


def amplification_estimate(angles: AnglePair, pixel_noise: float) -> float:
    """First-order 3D error amplification for i.i.d. observation noise.

    For Gaussian noise of scale ``pixel_noise`` (mm) on each of the two
    abscissae, the expected radius error behaves like
    E||x2_hat - x1_hat| - |x2 - x1|| / eps = (2 * pixel_noise / sqrt(pi)) / eps
    as the angle difference eps shrinks. Diagnostic only: the O(1) term is
    not modeled.
    """
    eps = angles.epsilon
    if not 0.0 < eps < math.pi:
        raise ValueError(f"|phi1 - phi2| = {eps!r} outside (0, pi)")
    if pixel_noise < 0.0:
        raise ValueError("pixel_noise must be nonnegative")
    return (2.0 * pixel_noise / math.sqrt(math.pi)) / eps
