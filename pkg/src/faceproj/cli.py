"""Command-line pipeline driver.

One monolithic ``register`` command runs the whole pipeline from a config
file; the stage commands (``project``, ``detect``, ``lift``, ``icp``,
``metrics``, ``synth``, ``sweep``) each wrap one module operation with
file-based inputs and outputs, so stages compose via the shell and a
staged run reproduces the monolithic artifacts byte for byte.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 detection failure,
5 degenerate geometry. Errors print one line to stderr in the form
``faceproj: error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .detect import DetectorSpec, detect_landmarks
from .errors import (
    BridgeError,
    DegenerateConfiguration,
    DegenerateNeighborhood,
    EmptyLevelSet,
    EmptySubsurface,
    InconsistentObservation,
    InsufficientLandmarks,
    LandmarkIndexMismatch,
    MeshFormatError,
    NoCorrespondences,
    NoFaceDetected,
    ProtocolError,
    SurfaceIntersectsPlane,
)
from .geometry import RigidTransform, SurfacePointSet, apply_transform
from .landmarks import Landmark2D, LandmarkSet2D, LandmarkSet3D
from .lift import AnglePair, lift_landmark_set
from .meshio import TriangleMesh, load_surface, mesh_to_point_set, save_surface
from .metrics import export_distance_colormap, point_error, surface_error
from .projection import (
    ProjectionImage,
    ProjectionConfig,
    load_calibration,
    read_pgm,
    read_png,
    render_projection,
    save_projection,
)
from .register import IcpConfig, icp_refine, select_subsurface, solve_landmark_transform
from .synth import SyntheticHeadSpec, generate_head, run_angle_sweep, write_sweep_csv
from .volume import extract_isosurface, load_volume

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DETECT = 4
EXIT_GEOMETRY = 5

TRANSFORM_CONVENTION = "row-major homogeneous; p_dst = M @ [p_src, 1]; units mm"


class CliError(Exception):
    def __init__(self, category: str, code: int, message: str):
        super().__init__(message)
        self.category = category
        self.code = code


def _config_error(message: str) -> CliError:
    return CliError("config", EXIT_CONFIG, message)


def _io_error(message: str) -> CliError:
    return CliError("io", EXIT_IO, message)


# ---------------------------------------------------------------------------
# pipeline config
# ---------------------------------------------------------------------------

_INPUT_BLOCK = {
    "surface": None,
    "volume": None,
    "threshold_hu": -500.0,
    "landmarks": None,
}

PIPELINE_DEFAULTS = {
    "a": _INPUT_BLOCK,
    "b": _INPUT_BLOCK,
    "angles": {"phi1_deg": 20.0, "phi2_deg": -20.0},
    "projection": {
        "image_width": 1024,
        "image_height": 1024,
        "pixel_pitch": None,
        "plane_offset": None,
        "splat_radius": 1.5,
    },
    "detector": {"kind": "oracle", "external_cmd": None, "noise_sigma_px": 0.0},
    "icp": {
        "max_iterations": 50,
        "tolerance": 1e-4,
        "max_correspondence_distance": None,
        "leaf_size": 16,
    },
    "subsurface_radius_mm": 25.0,
    "colormap_range_mm": 5.0,
    "seed": 0,
    "threads": 1,
    "out_dir": "faceproj_out",
}

# keys whose default is None, by the type a non-null value must have
_NULLABLE_STR = {"surface", "volume", "landmarks", "external_cmd"}
_NULLABLE_NUM = {"pixel_pitch", "plane_offset", "max_correspondence_distance"}


def _check_keys(user: dict, template: dict, path: str) -> None:
    for key, value in user.items():
        where = f"{path}.{key}" if path else key
        if key not in template:
            raise _config_error(f"unknown config key {where!r}")
        ref = template[key]
        if isinstance(ref, dict):
            if not isinstance(value, dict):
                raise _config_error(f"config key {where!r} must be a table")
            _check_keys(value, ref, where)
            continue
        if value is None:
            if key in _NULLABLE_STR or key in _NULLABLE_NUM:
                continue
            raise _config_error(f"config key {where!r} must not be null")
        if key in _NULLABLE_STR or isinstance(ref, str):
            if not isinstance(value, str):
                raise _config_error(f"config key {where!r} must be a string")
        elif isinstance(ref, bool) or isinstance(value, bool):
            raise _config_error(f"config key {where!r} must be a number")
        elif isinstance(ref, int) and not (key in _NULLABLE_NUM):
            if not isinstance(value, int):
                raise _config_error(f"config key {where!r} must be an integer")
        elif not isinstance(value, (int, float)):
            raise _config_error(f"config key {where!r} must be a number")


def _merge(base: dict, user: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in user.items():
        if isinstance(value, dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _read_json(path, kind: str, *, bad_code=None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise _io_error(f"cannot read {kind} {path}: {e}") from e
    except json.JSONDecodeError as e:
        err = _config_error if bad_code == EXIT_CONFIG else _io_error
        raise err(f"{path} is not valid JSON: {e}") from e


def load_pipeline_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the config file, then CLI flag overrides.

    Unknown keys anywhere in the file are rejected before any work runs.
    """
    user = {}
    if path is not None:
        user = _read_json(path, "config file", bad_code=EXIT_CONFIG)
        if not isinstance(user, dict):
            raise _config_error(f"{path}: config root must be a JSON object")
    _check_keys(user, PIPELINE_DEFAULTS, "")
    cfg = _merge(PIPELINE_DEFAULTS, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def _flag_overrides(args) -> dict:
    over: dict = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        over["threads"] = args.threads
    if getattr(args, "out_dir", None) is not None:
        over["out_dir"] = args.out_dir
    if getattr(args, "subsurface_radius_mm", None) is not None:
        over["subsurface_radius_mm"] = args.subsurface_radius_mm
    angles = {}
    if getattr(args, "phi1_deg", None) is not None:
        angles["phi1_deg"] = args.phi1_deg
    if getattr(args, "phi2_deg", None) is not None:
        angles["phi2_deg"] = args.phi2_deg
    if angles:
        over["angles"] = angles
    detector = {}
    if getattr(args, "detector", None) is not None:
        detector["kind"] = args.detector
    if getattr(args, "external_cmd", None) is not None:
        detector["external_cmd"] = args.external_cmd
    if detector:
        over["detector"] = detector
    if getattr(args, "threshold_hu", None) is not None:
        over["a"] = {"threshold_hu": args.threshold_hu}
        over["b"] = {"threshold_hu": args.threshold_hu}
    return over


def _angles(cfg: dict) -> AnglePair:
    block = cfg["angles"]
    try:
        return AnglePair(math.radians(block["phi1_deg"]), math.radians(block["phi2_deg"]))
    except ValueError as e:
        raise _config_error(f"angles: {e}") from e


def _projection_config(cfg: dict) -> ProjectionConfig:
    p = cfg["projection"]
    try:
        return ProjectionConfig(
            image_width=p["image_width"],
            image_height=p["image_height"],
            pixel_pitch=p["pixel_pitch"],
            plane_offset=p["plane_offset"],
            splat_radius=p["splat_radius"],
        )
    except ValueError as e:
        raise _config_error(f"projection: {e}") from e


def _icp_config(cfg: dict) -> IcpConfig:
    c = cfg["icp"]
    dist = c["max_correspondence_distance"]
    try:
        return IcpConfig(
            max_iterations=c["max_iterations"],
            tolerance=c["tolerance"],
            max_correspondence_distance=math.inf if dist is None else dist,
            leaf_size=c["leaf_size"],
        )
    except ValueError as e:
        raise _config_error(f"icp: {e}") from e


# ---------------------------------------------------------------------------
# artifact file formats
# ---------------------------------------------------------------------------

def _write_json(obj: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2))
        fh.write("\n")


def save_landmarks3d(lm: LandmarkSet3D, path) -> None:
    _write_json(
        {
            "format": "faceproj-landmarks3d",
            "indices": list(lm.indices),
            "points": lm.points.tolist(),
            "quality": lm.quality.tolist(),
            "normals": None if lm.normals is None else lm.normals.tolist(),
            "dropped": list(lm.dropped),
        },
        path,
    )


def load_landmarks3d(path) -> LandmarkSet3D:
    d = _read_json(path, "landmark file")
    if d.get("format") != "faceproj-landmarks3d":
        raise _io_error(f"{path} is not a 3D landmark file")
    try:
        return LandmarkSet3D(
            tuple(d["indices"]),
            np.asarray(d["points"], dtype=np.float64),
            np.asarray(d["quality"], dtype=np.float64),
            None if d.get("normals") is None else np.asarray(d["normals"], dtype=np.float64),
            tuple(d.get("dropped", ())),
        )
    except (KeyError, ValueError) as e:
        raise _io_error(f"{path}: malformed landmark file: {e}") from e


def save_landmarks2d(lm: LandmarkSet2D, path) -> None:
    _write_json(
        {
            "format": "faceproj-landmarks2d",
            "phi": lm.source_phi,
            "landmarks": [
                {"index": p.index, "col": p.col, "row": p.row, "x_world": p.x_world, "z_world": p.z_world}
                for p in lm.landmarks
            ],
            "excluded": list(lm.excluded),
        },
        path,
    )


def load_landmarks2d(path) -> LandmarkSet2D:
    d = _read_json(path, "landmark file")
    if d.get("format") != "faceproj-landmarks2d":
        raise _io_error(f"{path} is not a 2D landmark file")
    try:
        pts = tuple(
            Landmark2D(p["index"], p["col"], p["row"], p["x_world"], p["z_world"])
            for p in d["landmarks"]
        )
        return LandmarkSet2D(pts, source_phi=float(d["phi"]), excluded=tuple(d.get("excluded", ())))
    except (KeyError, TypeError, ValueError) as e:
        raise _io_error(f"{path}: malformed landmark file: {e}") from e


def save_transform(t: RigidTransform, path) -> None:
    _write_json(
        {
            "format": "faceproj-transform",
            "convention": TRANSFORM_CONVENTION,
            "matrix": t.as_matrix().tolist(),
        },
        path,
    )


def load_transform(path) -> RigidTransform:
    d = _read_json(path, "transform file")
    if d.get("format") != "faceproj-transform":
        raise _io_error(f"{path} is not a transform file")
    try:
        return RigidTransform.from_matrix(np.asarray(d["matrix"], dtype=np.float64))
    except (KeyError, ValueError) as e:
        raise _io_error(f"{path}: malformed transform file: {e}") from e


# ---------------------------------------------------------------------------
# input loading
# ---------------------------------------------------------------------------

def _as_point_set(obj) -> SurfacePointSet:
    return mesh_to_point_set(obj) if isinstance(obj, TriangleMesh) else obj


def _load_input(cfg: dict, role: str) -> tuple[SurfacePointSet, LandmarkSet3D | None]:
    block = cfg[role]
    if block["surface"] and block["volume"]:
        raise _config_error(f"input {role!r}: give either a surface or a volume, not both")
    if block["volume"]:
        vol = load_volume(block["volume"])
        surface = _as_point_set(extract_isosurface(vol, block["threshold_hu"]))
    elif block["surface"]:
        surface = _as_point_set(load_surface(block["surface"]))
    else:
        raise _config_error(f"input {role!r} needs a 'surface' or 'volume' path")
    truth = load_landmarks3d(block["landmarks"]) if block["landmarks"] else None
    if cfg["detector"]["kind"] == "oracle" and truth is None:
        raise _config_error(
            f"input {role!r}: the oracle detector needs a 'landmarks' ground-truth file"
        )
    return surface, truth


def _detector_spec(cfg: dict) -> DetectorSpec:
    d = cfg["detector"]
    try:
        return DetectorSpec(kind=d["kind"], external_command=d["external_cmd"])
    except ValueError as e:
        raise _config_error(f"detector: {e}") from e


def _detect_rng(seed: int, role: str, view: int) -> np.random.Generator:
    role_idx = 0 if role == "a" else 1
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(role_idx, view - 1)))


def _read_raster(path) -> np.ndarray:
    p = str(path)
    try:
        if p.endswith(".pgm"):
            return read_pgm(p)
        return read_png(p)
    except OSError as e:
        raise _io_error(f"cannot read image {path}: {e}") from e
    except ValueError as e:
        raise _io_error(f"{path}: {e}") from e


def _image_from_files(image_path) -> ProjectionImage:
    """Rebuild a detectable view from a raster plus its calibration sidecar."""
    sidecar = Path(image_path).with_suffix(".json")
    try:
        phi, cfg = load_calibration(sidecar)
    except OSError as e:
        raise _io_error(f"cannot read calibration {sidecar}: {e}") from e
    except (KeyError, ValueError) as e:
        raise _io_error(f"{sidecar}: malformed calibration: {e}") from e
    intensity = _read_raster(image_path)
    h, w = cfg.image_height, cfg.image_width
    return ProjectionImage(
        intensity=intensity,
        depth=np.zeros((h, w)),
        selected_point_index=np.full((h, w), -1, dtype=np.int32),
        phi=phi,
        config=cfg,
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _render_and_detect(
    surface: SurfacePointSet,
    truth: LandmarkSet3D | None,
    role: str,
    cfg: dict,
    angles: AnglePair,
    out: Path,
) -> LandmarkSet3D:
    spec = _detector_spec(cfg)
    sigma = cfg["detector"]["noise_sigma_px"]
    views = []
    for vi, phi in enumerate((angles.phi1, angles.phi2), start=1):
        img = render_projection(surface, phi, _projection_config(cfg))
        img_path, _ = save_projection(img, out / f"{role}_view{vi}")
        rng = _detect_rng(cfg["seed"], role, vi)
        found = detect_landmarks(
            img, spec, truth=truth, noise_sigma=sigma, rng=rng, image_path=img_path
        )
        save_landmarks2d(found, out / f"{role}_view{vi}.landmarks2d.json")
        views.append(found)
    lifted = lift_landmark_set(views[0], views[1], allow_partial=True, on_invalid="drop")
    save_landmarks3d(lifted, out / f"{role}.landmarks3d.json")
    return lifted


def cmd_register(args) -> int:
    if args.config is None:
        raise _config_error("register needs --config with the input paths")
    cfg = load_pipeline_config(args.config, _flag_overrides(args))
    angles = _angles(cfg)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    surfaces, lifted = {}, {}
    for role in ("a", "b"):
        surfaces[role], truth = _load_input(cfg, role)
        lifted[role] = _render_and_detect(surfaces[role], truth, role, cfg, angles, out)

    init = solve_landmark_transform(lifted["a"], lifted["b"])
    radius = cfg["subsurface_radius_mm"]
    sub_a = select_subsurface(surfaces["a"], lifted["a"], radius)
    sub_b = select_subsurface(surfaces["b"], lifted["b"], radius)
    report = icp_refine(sub_a, sub_b, init=init, cfg=_icp_config(cfg))

    save_transform(report.final_transform, out / "transform.json")
    save_surface(apply_transform(report.final_transform, surfaces["a"]), out / "registered_a.ply")

    moved_sub = apply_transform(report.final_transform, sub_a)
    err = surface_error(moved_sub, sub_b, signed=moved_sub.has_normals)
    shown = err.signed if err.signed is not None else err.distances
    export_distance_colormap(moved_sub, shown, cfg["colormap_range_mm"], out / "distance_colormap.ply")

    common = sorted(set(lifted["a"].indices) & set(lifted["b"].indices))
    moved_lm = LandmarkSet3D(
        tuple(common), report.final_transform.apply_points(lifted["a"].select(common).points)
    )
    metrics = {
        "e_mean_mm": report.e_mean,
        "e_sup_mm": report.e_sup,
        "iterations": report.iterations,
        "residuals_mm": list(report.residuals),
        "landmark_rms_mm": point_error(moved_lm, lifted["b"].select(common)),
        "angle_warning": angles.warning,
    }
    _write_json(metrics, out / "metrics.json")

    if angles.warning:
        print(f"faceproj: warning: {angles.warning}", file=sys.stderr)
    print(
        f"registered: E_mean {report.e_mean:.6f} mm, E_sup {report.e_sup:.6f} mm, "
        f"{report.iterations} iterations -> {out}"
    )
    return 0


def cmd_project(args) -> int:
    cfg = load_pipeline_config(args.config, _flag_overrides(args))
    angles = _angles(cfg)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    if args.volume:
        vol = load_volume(args.input)
        threshold = args.threshold_hu if args.threshold_hu is not None else cfg["a"]["threshold_hu"]
        surface = _as_point_set(extract_isosurface(vol, threshold))
    else:
        surface = _as_point_set(load_surface(args.input))
    for vi, phi in enumerate((angles.phi1, angles.phi2), start=1):
        img = render_projection(surface, phi, _projection_config(cfg))
        img_path, cal_path = save_projection(img, out / f"{args.role}_view{vi}")
        print(f"{img_path} {cal_path}")
    return 0


def cmd_detect(args) -> int:
    cfg = load_pipeline_config(args.config, _flag_overrides(args))
    if args.noise_sigma_px is not None:
        cfg["detector"]["noise_sigma_px"] = args.noise_sigma_px
    img = _image_from_files(args.image)
    truth = load_landmarks3d(args.truth) if args.truth else None
    if cfg["detector"]["kind"] == "oracle" and truth is None:
        raise _config_error("the oracle detector needs --truth with ground-truth landmarks")
    rng = _detect_rng(cfg["seed"], args.role, args.view)
    found = detect_landmarks(
        img,
        _detector_spec(cfg),
        truth=truth,
        noise_sigma=cfg["detector"]["noise_sigma_px"],
        rng=rng,
        image_path=args.image,
    )
    out_path = args.output or str(Path(args.image).with_suffix("")) + ".landmarks2d.json"
    save_landmarks2d(found, out_path)
    print(out_path)
    return 0


def cmd_lift(args) -> int:
    view1 = load_landmarks2d(args.view1)
    view2 = load_landmarks2d(args.view2)
    lifted = lift_landmark_set(view1, view2, allow_partial=True, on_invalid="drop")
    save_landmarks3d(lifted, args.output)
    print(args.output)
    return 0


def cmd_icp(args) -> int:
    cfg = load_pipeline_config(args.config, _flag_overrides(args))
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    surf_a = _as_point_set(load_surface(args.surface_a))
    surf_b = _as_point_set(load_surface(args.surface_b))
    lm_a = load_landmarks3d(args.landmarks_a)
    lm_b = load_landmarks3d(args.landmarks_b)
    init = solve_landmark_transform(lm_a, lm_b)
    radius = cfg["subsurface_radius_mm"]
    sub_a = select_subsurface(surf_a, lm_a, radius)
    sub_b = select_subsurface(surf_b, lm_b, radius)
    report = icp_refine(sub_a, sub_b, init=init, cfg=_icp_config(cfg))
    save_transform(report.final_transform, out / "transform.json")
    _write_json(
        {
            "e_mean_mm": report.e_mean,
            "e_sup_mm": report.e_sup,
            "iterations": report.iterations,
            "residuals_mm": list(report.residuals),
        },
        out / "icp_report.json",
    )
    print(f"E_mean {report.e_mean:.6f} mm, {report.iterations} iterations -> {out / 'transform.json'}")
    return 0


def cmd_metrics(args) -> int:
    surf_a = _as_point_set(load_surface(args.surface_a))
    surf_b = _as_point_set(load_surface(args.surface_b))
    if args.transform:
        surf_a = apply_transform(load_transform(args.transform), surf_a)
    err = surface_error(surf_a, surf_b)
    payload = {"e_mean_mm": err.e_mean, "e_sup_mm": err.e_sup, "points": len(surf_a)}
    if args.output:
        _write_json(payload, args.output)
        print(args.output)
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def _parse_vec3(text: str, what: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise _config_error(f"{what} must be three comma-separated numbers, got {text!r}")
    try:
        x, y, z = (float(v) for v in parts)
    except ValueError as e:
        raise _config_error(f"{what} must be numeric: {e}") from e
    return x, y, z


def cmd_synth(args) -> int:
    out = Path(args.out_dir if args.out_dir is not None else "faceproj_out")
    out.mkdir(parents=True, exist_ok=True)
    kwargs = {}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.density is not None:
        kwargs["density"] = args.density
    if args.crop_z is not None:
        kwargs["crop_z"] = tuple(args.crop_z)
    try:
        spec = SyntheticHeadSpec(**kwargs)
    except ValueError as e:
        raise _config_error(f"synth: {e}") from e
    surface, truth = generate_head(spec)

    motion = RigidTransform.identity()
    if args.rot_deg:
        axis = np.asarray(_parse_vec3(args.rot_axis, "--rot-axis"), dtype=np.float64)
        if not np.linalg.norm(axis) > 0:
            raise _config_error("--rot-axis must be nonzero")
        axis /= np.linalg.norm(axis)
        rot = Rotation.from_rotvec(axis * math.radians(args.rot_deg)).as_matrix()
        motion = RigidTransform(rot, motion.translation)
    if args.translate:
        motion = RigidTransform(motion.rotation, _parse_vec3(args.translate, "--translate"))
    if args.rot_deg or args.translate:
        surface = apply_transform(motion, surface)
        truth = LandmarkSet3D(
            truth.indices,
            motion.apply_points(truth.points),
            truth.quality,
            None if truth.normals is None else truth.normals @ motion.rotation.T,
        )
        save_transform(motion, out / f"{args.name}.motion.json")

    save_surface(surface, out / f"{args.name}.ply")
    save_landmarks3d(truth, out / f"{args.name}.landmarks3d.json")
    print(f"{out / (args.name + '.ply')} ({len(surface)} points)")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_pipeline_config(args.config, _flag_overrides(args))
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        eps = [math.radians(float(v)) for v in args.eps_deg.split(",")]
        spec = SyntheticHeadSpec(
            seed=cfg["seed"], **({"density": args.density} if args.density is not None else {})
        )
        result = run_angle_sweep(
            spec,
            eps,
            args.sigma_px,
            args.trials,
            seed=cfg["seed"],
            threads=cfg["threads"],
        )
    except ValueError as e:
        raise _config_error(f"sweep: {e}") from e
    trials_path = out / "sweep_trials.csv"
    agg_path = out / "sweep_aggregate.csv"
    write_sweep_csv(result, trials_path, agg_path)
    for row in result.rows:
        print(
            f"eps {math.degrees(row.epsilon):6.2f} deg: median E_poi "
            f"{row.median_e_poi:.4f} mm ({row.failures}/{row.trials} failed)"
        )
    print(f"-> {trials_path} {agg_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--seed", type=int, help="seed for every stochastic component")
    p.add_argument("--threads", type=int, help="worker cap for parallel trials")
    p.add_argument("--out-dir", help="artifact directory")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="faceproj", description=__doc__.split("\n\n")[0])
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="run the full pipeline from a config file")
    _add_common(p)
    p.add_argument("--detector", choices=("oracle", "external"))
    p.add_argument("--external-cmd", help="detector subprocess command line")
    p.add_argument("--phi1-deg", type=float)
    p.add_argument("--phi2-deg", type=float)
    p.add_argument("--subsurface-radius-mm", type=float)
    p.add_argument("--threshold-hu", type=float)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("project", help="render the two shaded views of one surface")
    p.add_argument("input", help="surface mesh/point file, or volume when --volume")
    p.add_argument("--volume", action="store_true", help="treat input as a scalar volume")
    p.add_argument("--threshold-hu", type=float)
    p.add_argument("--role", choices=("a", "b"), default="a", help="artifact name prefix")
    p.add_argument("--phi1-deg", type=float)
    p.add_argument("--phi2-deg", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("detect", help="detect 2D landmarks in one rendered view")
    p.add_argument("image", help="rendered view (.png/.pgm) with a .json calibration sidecar")
    p.add_argument("--truth", help="3D landmark file for the oracle detector")
    p.add_argument("--detector", choices=("oracle", "external"))
    p.add_argument("--external-cmd")
    p.add_argument("--noise-sigma-px", type=float)
    p.add_argument("--role", choices=("a", "b"), default="a", help="noise stream: surface role")
    p.add_argument("--view", type=int, choices=(1, 2), default=1, help="noise stream: view number")
    p.add_argument("-o", "--output")
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("lift", help="lift two 2D landmark sets to 3D")
    p.add_argument("view1")
    p.add_argument("view2")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("icp", help="landmark solve plus ICP between two surfaces")
    p.add_argument("surface_a")
    p.add_argument("surface_b")
    p.add_argument("landmarks_a")
    p.add_argument("landmarks_b")
    p.add_argument("--subsurface-radius-mm", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_icp)

    p = sub.add_parser("metrics", help="one-sided surface error between two surfaces")
    p.add_argument("surface_a")
    p.add_argument("surface_b")
    p.add_argument("--transform", help="apply this transform to surface_a first")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("synth", help="generate a synthetic head fixture")
    p.add_argument("--name", default="head", help="artifact base name")
    p.add_argument("--seed", type=int)
    p.add_argument("--density", type=float, help="sample points per mm^2")
    p.add_argument("--crop-z", type=float, nargs=2, metavar=("ZMIN", "ZMAX"))
    p.add_argument("--rot-axis", default="0,0,1")
    p.add_argument("--rot-deg", type=float, default=0.0)
    p.add_argument("--translate", help="tx,ty,tz mm applied after rotation")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="angle sweep benchmark to CSV")
    p.add_argument("--eps-deg", default="10,20,30,40,50,60,70,80")
    p.add_argument("--sigma-px", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--density", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    return top


_DETECT_ERRORS = (
    NoFaceDetected,
    ProtocolError,
    BridgeError,
    InsufficientLandmarks,
    InconsistentObservation,
    LandmarkIndexMismatch,
)
_GEOMETRY_ERRORS = (
    DegenerateConfiguration,
    DegenerateNeighborhood,
    EmptyLevelSet,
    EmptySubsurface,
    NoCorrespondences,
    SurfaceIntersectsPlane,
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"faceproj: error: {e.category}: {e}", file=sys.stderr)
        return e.code
    except _DETECT_ERRORS as e:
        print(f"faceproj: error: detect: {e}", file=sys.stderr)
        return EXIT_DETECT
    except _GEOMETRY_ERRORS as e:
        print(f"faceproj: error: geometry: {e}", file=sys.stderr)
        return EXIT_GEOMETRY
    except MeshFormatError as e:
        print(f"faceproj: error: io: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"faceproj: error: io: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"faceproj: error: config: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
