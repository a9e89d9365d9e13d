"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FaceprojError(Exception):
    """Base class for all faceproj errors."""


class DegenerateNeighborhood(FaceprojError):
    """A point's neighborhood is rank-deficient (e.g. all neighbors coincide)."""


class MeshFormatError(FaceprojError):
    """A mesh or volume file failed to parse.

    Carries the byte offset of the offending construct when known.
    """

    def __init__(self, message: str, *, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EmptyLevelSet(FaceprojError):
    """The requested isovalue produces no surface inside the volume."""


class SurfaceIntersectsPlane(FaceprojError):
    """The projection plane does not lie outside the rotated surface."""


class NoFaceDetected(FaceprojError):
    """The external detector reported that no face was found."""


class BridgeError(FaceprojError):
    """The external detector subprocess failed (exit, timeout, bad JSON)."""


class ProtocolError(FaceprojError):
    """The external detector returned data outside the bridge protocol."""


class InconsistentObservation(FaceprojError):
    """A 2D observation pair cannot come from any front-hemisphere 3D point."""


class InsufficientLandmarks(FaceprojError):
    """Fewer than the minimum number of common landmarks are available."""


class LandmarkIndexMismatch(FaceprojError):
    """Two landmark sets do not share identical index sets."""


class DegenerateConfiguration(FaceprojError):
    """Landmark geometry does not constrain a rigid transform (e.g. collinear)."""


class EmptySubsurface(FaceprojError):
    """Sub-surface selection produced no points."""


class NoCorrespondences(FaceprojError):
    """Every candidate correspondence was rejected by the distance gate."""
