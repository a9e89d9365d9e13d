"""Orthographic shaded rendering of point sets, with pixel calibration.

A surface rotated by phi about the z-axis is viewed along the -y direction:
the projection plane sits at y = d (beyond the surface) and every pixel
(col, row) corresponds to a ray parallel to the y-axis through world
(x_rot, z) = ((col - s0) * pitch, (z0 - row) * pitch). Among the points
whose footprint covers the pixel, the one closest to the plane (maximal
rotated y) wins; its Lambertian intensity is max(n . (q - x)/|q - x|, 0)
for a point light at q.

Rendering is deterministic: argmax ties are broken by the lowest point
index, so parallel and sequential schedules agree bit-for-bit.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .errors import SurfaceIntersectsPlane
from .geometry import SurfacePointSet, estimate_normals, rotation_about_z


@dataclass(frozen=True)
class ProjectionConfig:
    """Raster geometry for one projection. None fields resolve at render time.

    Auto-resolution: pixel_pitch scales the rotated (x, z) bounding box to
    fill 90% of the raster, (s0, z0) center it, plane_offset clears the
    surface by a tenth of its diagonal, and the light sits on the +y axis
    at twice the plane offset.
    """

    image_width: int = 1024
    image_height: int = 1024
    pixel_pitch: float | None = None        # mm per pixel
    plane_offset: float | None = None       # plane y = d, mm
    light_position: tuple[float, float, float] | None = None
    s0: float | None = None                  # column of world x_rot = 0
    z0: float | None = None                  # row of world z = 0
    splat_radius: float = 1.5                # point footprint, pixels

    def __post_init__(self):
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be at least 1x1")
        if self.pixel_pitch is not None and not self.pixel_pitch > 0.0:
            raise ValueError(f"pixel_pitch must be positive, got {self.pixel_pitch!r}")
        if self.splat_radius < 0.0:
            raise ValueError("splat_radius must be nonnegative")
        if self.light_position is not None:
            q = np.asarray(self.light_position, dtype=np.float64)
            if q.shape != (3,) or not np.all(np.isfinite(q)):
                raise ValueError("light_position must be a finite 3-vector")
            object.__setattr__(self, "light_position", (float(q[0]), float(q[1]), float(q[2])))

    @property
    def is_resolved(self) -> bool:
        return None not in (
            self.pixel_pitch,
            self.plane_offset,
            self.light_position,
            self.s0,
            self.z0,
        )


@dataclass(frozen=True)
class ProjectionImage:
    """One rendered view: intensity, depth buffer, and provenance.

    intensity is (H, W) in [0, 1]; depth holds the rotated-frame y of the
    selected point and NaN where no point covers the pixel;
    selected_point_index holds -1 there. config is fully resolved.
    """

    intensity: NDArray[np.float64]
    depth: NDArray[np.float64]
    selected_point_index: NDArray[np.int32]
    phi: float
    config: ProjectionConfig

    def __post_init__(self):
        h, w = self.config.image_height, self.config.image_width
        for name in ("intensity", "depth", "selected_point_index"):
            a = getattr(self, name)
            if a.shape != (h, w):
                raise ValueError(f"{name} shape {a.shape} does not match config {h}x{w}")
            a = np.asarray(a)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if not self.config.is_resolved:
            raise ValueError("ProjectionImage requires a fully resolved config")

    @property
    def populated(self) -> NDArray[np.bool_]:
        return np.isfinite(self.depth)


def _resolve_config(cfg: ProjectionConfig, xr, yr, z) -> ProjectionConfig:
    w, h = cfg.image_width, cfg.image_height
    ex = float(xr.max() - xr.min())
    ez = float(z.max() - z.min())

    pitch = cfg.pixel_pitch
    if pitch is None:
        pitch = max(
            ex / (0.9 * max(w - 1, 1)),
            ez / (0.9 * max(h - 1, 1)),
        )
        if pitch == 0.0:
            pitch = 1.0

    s0 = cfg.s0
    if s0 is None:
        s0 = (w - 1) / 2.0 - float(xr.max() + xr.min()) / 2.0 / pitch
    z0 = cfg.z0
    if z0 is None:
        z0 = (h - 1) / 2.0 + float(z.max() + z.min()) / 2.0 / pitch

    d = cfg.plane_offset
    if d is None:
        ey = float(yr.max() - yr.min())
        diag = math.sqrt(ex * ex + ey * ey + ez * ez)
        d = float(yr.max()) + max(1.0, 0.1 * diag)

    q = cfg.light_position
    if q is None:
        q = (0.0, 2.0 * d, 0.0)

    return replace(
        cfg, pixel_pitch=pitch, plane_offset=d, light_position=q, s0=float(s0), z0=float(z0)
    )


def world_to_pixel(cfg: ProjectionConfig, x_rot, z) -> tuple[np.ndarray, np.ndarray]:
    """Map rotated-frame (x_rot, z) in mm to fractional (col, row)."""
    if not cfg.is_resolved:
        raise ValueError("config must be resolved before mapping coordinates")
    col = cfg.s0 + np.asarray(x_rot, dtype=np.float64) / cfg.pixel_pitch
    row = cfg.z0 - np.asarray(z, dtype=np.float64) / cfg.pixel_pitch
    return col, row


def pixel_to_world(img: ProjectionImage | ProjectionConfig, col, row) -> tuple[float, float]:
    """Invert the raster mapping: fractional (col, row) to (x_rot, z) in mm."""
    cfg = img.config if isinstance(img, ProjectionImage) else img
    if not cfg.is_resolved:
        raise ValueError("config must be resolved before mapping coordinates")
    col = float(col)
    row = float(row)
    # pixel coordinates address pixel centers, so the image spans
    # [-0.5, size - 0.5] in each axis
    if not (-0.5 <= col <= cfg.image_width - 0.5 and -0.5 <= row <= cfg.image_height - 0.5):
        raise ValueError(
            f"pixel ({col}, {row}) outside image bounds "
            f"{cfg.image_width}x{cfg.image_height}"
        )
    return (col - cfg.s0) * cfg.pixel_pitch, (cfg.z0 - row) * cfg.pixel_pitch


def render_projection(
    s: SurfacePointSet, phi: float, cfg: ProjectionConfig | None = None
) -> ProjectionImage:
    """Render the shaded orthographic view of ``s`` rotated by ``phi``."""
    if cfg is None:
        cfg = ProjectionConfig()
    if len(s) == 0:
        raise ValueError("cannot render an empty point set")
    if not s.has_normals:
        s = estimate_normals(s)

    rot = rotation_about_z(phi)
    pts = s.points @ rot.T
    normals = s.normals @ rot.T
    xr, yr, z = pts[:, 0], pts[:, 1], pts[:, 2]

    rcfg = _resolve_config(cfg, xr, yr, z)
    if yr.max() >= rcfg.plane_offset:
        raise SurfaceIntersectsPlane(
            f"rotated surface reaches y = {yr.max():.6g} but the projection plane "
            f"sits at y = {rcfg.plane_offset:.6g}; increase plane_offset"
        )

    q = np.array(rcfg.light_position)
    to_light = q[None, :] - pts
    dist = np.linalg.norm(to_light, axis=1)
    if np.any(dist == 0.0):
        raise ValueError("light position coincides with a surface point")
    shade = np.maximum(np.sum(normals * to_light, axis=1) / dist, 0.0)

    h, w = rcfg.image_height, rcfg.image_width
    colf, rowf = world_to_pixel(rcfg, xr, z)

    # candidate (pixel, point) pairs: integer pixels within splat_radius of
    # each point's fractional position
    reach = int(math.ceil(rcfg.splat_radius + 0.5))
    base_c = np.round(colf).astype(np.int64)
    base_r = np.round(rowf).astype(np.int64)
    cand_pix = []
    cand_idx = []
    n = len(s)
    idx = np.arange(n)
    r2 = rcfg.splat_radius**2
    for dc in range(-reach, reach + 1):
        for dr in range(-reach, reach + 1):
            c = base_c + dc
            r = base_r + dr
            keep = (
                ((c - colf) ** 2 + (r - rowf) ** 2 <= r2)
                & (c >= 0) & (c < w) & (r >= 0) & (r < h)
            )
            if np.any(keep):
                cand_pix.append(r[keep] * w + c[keep])
                cand_idx.append(idx[keep])

    intensity = np.zeros((h, w))
    depth = np.full((h, w), np.nan)
    selected = np.full((h, w), -1, dtype=np.int32)

    if cand_pix:
        pix = np.concatenate(cand_pix)
        pidx = np.concatenate(cand_idx)
        # per pixel keep the point with max rotated y, ties to lowest index
        order = np.lexsort((pidx, -yr[pidx], pix))
        pix_sorted = pix[order]
        first = np.unique(pix_sorted, return_index=True)[1]
        win_pix = pix_sorted[first]
        win_idx = pidx[order][first]
        rows, cols = np.divmod(win_pix, w)
        intensity[rows, cols] = shade[win_idx]
        depth[rows, cols] = yr[win_idx]
        selected[rows, cols] = win_idx

    return ProjectionImage(intensity, depth, selected, float(phi), rcfg)


def fill_holes(img: ProjectionImage, max_gap: float) -> ProjectionImage:
    """Fill small empty pixels from the median of nearby populated ones.

    An empty pixel acquires the median intensity and depth of the populated
    pixels in its square window (offsets up to ``max_gap`` along each
    axis), provided there are at least 5 of them; its selected index
    becomes that of the neighbor whose depth is closest to the filled
    value. Larger holes stay empty.
    """
    if max_gap < 0:
        raise ValueError("max_gap must be nonnegative")
    populated = img.populated
    empty_r, empty_c = np.nonzero(~populated)
    if len(empty_r) == 0 or max_gap < 1.0:
        return img

    h, w = img.depth.shape
    reach = int(math.floor(max_gap))
    offsets = [
        (dr, dc)
        for dr in range(-reach, reach + 1)
        for dc in range(-reach, reach + 1)
        if (dr, dc) != (0, 0)
    ]
    k = len(offsets)
    m = len(empty_r)
    nb_int = np.full((m, k), np.nan)
    nb_dep = np.full((m, k), np.nan)
    nb_idx = np.full((m, k), np.iinfo(np.int64).max, dtype=np.int64)
    for j, (dr, dc) in enumerate(offsets):
        rr = empty_r + dr
        cc = empty_c + dc
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        ok[ok] = populated[rr[ok], cc[ok]]
        nb_int[ok, j] = img.intensity[rr[ok], cc[ok]]
        nb_dep[ok, j] = img.depth[rr[ok], cc[ok]]
        nb_idx[ok, j] = img.selected_point_index[rr[ok], cc[ok]]

    counts = np.sum(np.isfinite(nb_dep), axis=1)
    fill = counts >= 5
    if not np.any(fill):
        return img

    with np.errstate(all="ignore"):
        med_int = np.nanmedian(nb_int[fill], axis=1)
        med_dep = np.nanmedian(nb_dep[fill], axis=1)

    # neighbor whose depth is closest to the filled depth, ties to lowest
    # point index, supplies the selected index
    diff = np.abs(nb_dep[fill] - med_dep[:, None])
    diff[~np.isfinite(diff)] = np.inf
    best = diff.min(axis=1, keepdims=True)
    idx_pool = np.where(diff <= best, nb_idx[fill], np.iinfo(np.int64).max)
    src_idx = idx_pool.min(axis=1)

    intensity = img.intensity.copy()
    depth = img.depth.copy()
    selected = img.selected_point_index.copy()
    fr, fc = empty_r[fill], empty_c[fill]
    intensity[fr, fc] = med_int
    depth[fr, fc] = med_dep
    selected[fr, fc] = src_idx.astype(np.int32)
    return ProjectionImage(intensity, depth, selected, img.phi, img.config)


# ---------------------------------------------------------------------------
# raster export / import
# ---------------------------------------------------------------------------

def _quantize(intensity: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(intensity) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, intensity) -> None:
    """Write intensity in [0,1] as binary 8-bit PGM (P5)."""
    data = _quantize(intensity)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM into intensity in [0,1]."""
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with # comments allowed between them
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.float64) / 255.0


_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def write_png(path, intensity) -> None:
    """Write intensity in [0,1] as 8-bit grayscale PNG (filter type 0)."""
    data = _quantize(intensity)
    h, w = data.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    raw = b"".join(b"\x00" + data[r].tobytes() for r in range(h))
    with open(path, "wb") as f:
        f.write(_PNG_SIG)
        f.write(_png_chunk(b"IHDR", ihdr))
        f.write(_png_chunk(b"IDAT", zlib.compress(raw, 9)))
        f.write(_png_chunk(b"IEND", b""))


def _unfilter_png(raw: bytes, w: int, h: int) -> np.ndarray:
    out = np.zeros((h, w), dtype=np.uint8)
    stride = w + 1
    prev = np.zeros(w, dtype=np.int64)
    for r in range(h):
        line = raw[r * stride : (r + 1) * stride]
        ftype = line[0]
        cur = np.frombuffer(line, dtype=np.uint8, offset=1).astype(np.int64)
        if ftype == 0:
            pass
        elif ftype == 1:      # Sub
            for i in range(1, w):
                cur[i] = (cur[i] + cur[i - 1]) & 0xFF
        elif ftype == 2:      # Up
            cur = (cur + prev) & 0xFF
        elif ftype == 3:      # Average
            for i in range(w):
                left = cur[i - 1] if i else 0
                cur[i] = (cur[i] + (left + prev[i]) // 2) & 0xFF
        elif ftype == 4:      # Paeth
            for i in range(w):
                a = cur[i - 1] if i else 0
                b = prev[i]
                c = prev[i - 1] if i else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
                cur[i] = (cur[i] + pred) & 0xFF
        else:
            raise ValueError(f"unsupported PNG filter type {ftype}")
        out[r] = cur.astype(np.uint8)
        prev = cur
    return out


def read_png(path) -> np.ndarray:
    """Read an 8-bit grayscale PNG into intensity in [0,1]."""
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(_PNG_SIG):
        raise ValueError(f"{path}: not a PNG file")
    pos = len(_PNG_SIG)
    w = h = None
    idat = b""
    while pos < len(raw):
        (length,) = struct.unpack(">I", raw[pos : pos + 4])
        tag = raw[pos + 4 : pos + 8]
        payload = raw[pos + 8 : pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            w, h, depth, color, _, _, interlace = struct.unpack(">IIBBBBB", payload)
            if depth != 8 or color != 0 or interlace != 0:
                raise ValueError(f"{path}: only 8-bit non-interlaced grayscale supported")
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
    if w is None:
        raise ValueError(f"{path}: missing IHDR")
    data = _unfilter_png(zlib.decompress(idat), w, h)
    return data.astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# calibration sidecar
# ---------------------------------------------------------------------------

def calibration_dict(img: ProjectionImage) -> dict:
    cfg = img.config
    return {
        "phi": img.phi,
        "image_width": cfg.image_width,
        "image_height": cfg.image_height,
        "pixel_pitch": cfg.pixel_pitch,
        "s0": cfg.s0,
        "z0": cfg.z0,
        "plane_offset": cfg.plane_offset,
        "light_position": list(cfg.light_position),
        "splat_radius": cfg.splat_radius,
    }


def save_projection(img: ProjectionImage, base_path, fmt: str = "png") -> tuple[str, str]:
    """Write the raster plus a calibration sidecar; returns (image, sidecar) paths."""
    if fmt not in ("png", "pgm"):
        raise ValueError(f"format must be 'png' or 'pgm', got {fmt!r}")
    base = str(base_path)
    image_path = f"{base}.{fmt}"
    sidecar_path = f"{base}.json"
    (write_png if fmt == "png" else write_pgm)(image_path, img.intensity)
    with open(sidecar_path, "w", encoding="utf-8") as f:
        f.write(json.dumps(calibration_dict(img), sort_keys=True, indent=2))
        f.write("\n")
    return image_path, sidecar_path


def load_calibration(path) -> tuple[float, ProjectionConfig]:
    """Read a sidecar written by save_projection: returns (phi, resolved config)."""
    with open(path, encoding="utf-8") as f:
        cal = json.load(f)
    cfg = ProjectionConfig(
        image_width=cal["image_width"],
        image_height=cal["image_height"],
        pixel_pitch=cal["pixel_pitch"],
        plane_offset=cal["plane_offset"],
        light_position=tuple(cal["light_position"]),
        s0=cal["s0"],
        z0=cal["z0"],
        splat_radius=cal.get("splat_radius", 1.5),
    )
    return float(cal["phi"]), cfg
