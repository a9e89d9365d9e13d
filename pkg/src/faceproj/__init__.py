"""Rigid registration of 3D facial surfaces via shaded 2D projections.

The pipeline: render orthographic shaded views of each surface, detect 2D
landmarks in the views, reconstruct 3D landmarks in closed form from view
pairs, solve the landmark least-squares rigid transform, then refine with
ICP on a landmark-anchored subsurface.
"""

from .errors import (
    BridgeError,
    DegenerateConfiguration,
    DegenerateNeighborhood,
    EmptyLevelSet,
    EmptySubsurface,
    FaceprojError,
    InconsistentObservation,
    InsufficientLandmarks,
    LandmarkIndexMismatch,
    MeshFormatError,
    NoCorrespondences,
    NoFaceDetected,
    ProtocolError,
    SurfaceIntersectsPlane,
)
from .geometry import (
    RigidTransform,
    SurfacePointSet,
    apply_transform,
    estimate_normals,
    rotate_about_z,
    rotation_about_z,
)
from .landmarks import DEFAULT_SUBSET, Landmark2D, LandmarkSet2D, LandmarkSet3D
from .lift import (
    AnglePair,
    amplification_estimate,
    default_angles,
    lift_batch,
    lift_landmark,
    lift_landmark_set,
)
from .detect import (
    DetectorSpec,
    ExternalDetector,
    detect_landmarks,
    oracle_project_landmarks,
)
from .meshio import TriangleMesh, load_surface, mesh_to_point_set, save_surface
from .metrics import (
    SurfaceErrorReport,
    distance_colors,
    export_distance_colormap,
    point_error,
    signed_distance,
    surface_error,
)
from .projection import (
    ProjectionConfig,
    ProjectionImage,
    fill_holes,
    load_calibration,
    render_projection,
    save_projection,
)
from .register import (
    IcpConfig,
    RegistrationReport,
    icp_refine,
    nearest_neighbors,
    select_subsurface,
    solve_landmark_transform,
)
from .synth import (
    EndToEndResult,
    SweepResult,
    SweepRow,
    SweepTrial,
    SyntheticHeadSpec,
    generate_head,
    run_angle_sweep,
    run_end_to_end,
    view_noise_scale,
    write_sweep_csv,
)
from .volume import ScalarVolume, extract_isosurface, load_volume, save_volume

__version__ = "0.1.0"

__all__ = [
    "AnglePair",
    "BridgeError",
    "DEFAULT_SUBSET",
    "DegenerateConfiguration",
    "DegenerateNeighborhood",
    "DetectorSpec",
    "EmptyLevelSet",
    "EmptySubsurface",
    "EndToEndResult",
    "ExternalDetector",
    "FaceprojError",
    "IcpConfig",
    "InconsistentObservation",
    "InsufficientLandmarks",
    "Landmark2D",
    "LandmarkIndexMismatch",
    "LandmarkSet2D",
    "LandmarkSet3D",
    "MeshFormatError",
    "NoCorrespondences",
    "NoFaceDetected",
    "ProjectionConfig",
    "ProjectionImage",
    "ProtocolError",
    "RegistrationReport",
    "RigidTransform",
    "ScalarVolume",
    "SurfaceErrorReport",
    "SurfaceIntersectsPlane",
    "SurfacePointSet",
    "SweepResult",
    "SweepRow",
    "SweepTrial",
    "SyntheticHeadSpec",
    "TriangleMesh",
    "amplification_estimate",
    "apply_transform",
    "default_angles",
    "detect_landmarks",
    "distance_colors",
    "estimate_normals",
    "export_distance_colormap",
    "extract_isosurface",
    "fill_holes",
    "generate_head",
    "icp_refine",
    "lift_batch",
    "lift_landmark",
    "lift_landmark_set",
    "load_calibration",
    "load_surface",
    "load_volume",
    "mesh_to_point_set",
    "nearest_neighbors",
    "oracle_project_landmarks",
    "point_error",
    "render_projection",
    "rotate_about_z",
    "rotation_about_z",
    "run_angle_sweep",
    "run_end_to_end",
    "save_projection",
    "save_surface",
    "save_volume",
    "select_subsurface",
    "signed_distance",
    "solve_landmark_transform",
    "surface_error",
    "view_noise_scale",
    "write_sweep_csv",
    "__version__",
]
