"""2D landmark detection: ground-truth oracle and external subprocess client.

Both paths produce a LandmarkSet2D whose world coordinates live in the
rotated frame of the source projection, ready for closed-form lifting.
The external path speaks line-delimited JSON over a child process's
stdin/stdout:

    request:  {"image_path": "<abs path>", "width": W, "height": H}
    response: {"detected": true|false, "landmarks": [{"index", "col", "row"}, ...]}

one response line per request line, landmark indices 0..67, pixel origin at
the top-left pixel center.
"""

from __future__ import annotations

import json
import os
import selectors
import shlex
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass

import numpy as np

from .errors import BridgeError, NoFaceDetected, ProtocolError
from .geometry import rotation_about_z
from .landmarks import DEFAULT_SUBSET, Landmark2D, LandmarkSet2D, LandmarkSet3D
from .projection import ProjectionConfig, ProjectionImage, world_to_pixel

N_MODEL_POINTS = 68


@dataclass(frozen=True)
class DetectorSpec:
    """Which detector to run and which landmark indices feed registration."""

    kind: str = "oracle"
    external_command: str | None = None
    subset: tuple[int, ...] = DEFAULT_SUBSET

    def __post_init__(self):
        if self.kind not in ("oracle", "external"):
            raise ValueError(f"kind must be 'oracle' or 'external', got {self.kind!r}")
        if self.kind == "external" and not self.external_command:
            raise ValueError("external detector requires external_command")
        subset = tuple(int(j) for j in self.subset)
        if len(subset) < 3:
            raise ValueError(f"subset needs at least 3 landmarks, got {len(subset)}")
        if len(set(subset)) != len(subset):
            raise ValueError("subset indices must be unique")
        if any(j < 0 or j >= N_MODEL_POINTS for j in subset):
            raise ValueError(f"subset indices must lie in 0..{N_MODEL_POINTS - 1}")
        object.__setattr__(self, "subset", tuple(sorted(subset)))


def oracle_project_landmarks(
    landmarks3d: LandmarkSet3D,
    phi: float,
    cfg: ProjectionConfig,
    noise_sigma=0.0,
    rng: np.random.Generator | None = None,
) -> LandmarkSet2D:
    """Forward-project known 3D landmarks into a view, optionally noisy.

    ``noise_sigma`` is an i.i.d. Gaussian pixel scale, either scalar or one
    value per landmark. Landmarks falling outside the raster are excluded
    from the result and recorded in its ``excluded`` tuple.
    """
    if not cfg.is_resolved:
        raise ValueError("config must be resolved before projecting landmarks")
    sigma = np.broadcast_to(
        np.asarray(noise_sigma, dtype=np.float64), (len(landmarks3d.indices),)
    )
    if np.any(sigma < 0.0):
        raise ValueError("noise_sigma must be nonnegative")
    if rng is None:
        rng = np.random.default_rng()

    rot = rotation_about_z(phi)
    pts = landmarks3d.points @ rot.T
    col, row = world_to_pixel(cfg, pts[:, 0], pts[:, 2])
    noisy = np.any(sigma > 0.0)
    if noisy:
        col = col + rng.normal(0.0, 1.0, size=col.shape) * sigma
        row = row + rng.normal(0.0, 1.0, size=row.shape) * sigma

    out = []
    excluded = []
    for j, idx in enumerate(landmarks3d.indices):
        c, r = float(col[j]), float(row[j])
        if not (-0.5 <= c <= cfg.image_width - 0.5 and -0.5 <= r <= cfg.image_height - 0.5):
            excluded.append(idx)
            continue
        x_world = (c - cfg.s0) * cfg.pixel_pitch
        z_world = (cfg.z0 - r) * cfg.pixel_pitch
        out.append(Landmark2D(idx, c, r, x_world, z_world))
    return LandmarkSet2D(tuple(out), source_phi=float(phi), excluded=tuple(excluded))


# ---------------------------------------------------------------------------
# external subprocess bridge
# ---------------------------------------------------------------------------

class ExternalDetector:
    """Client for one detector subprocess; one request in flight at a time.

    The child is spawned on first use and kept alive across calls. Use as a
    context manager (or call close()) to release it.
    """

    def __init__(self, command, timeout: float = 30.0):
        self._argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self._argv:
            raise ValueError("empty detector command")
        self._timeout = timeout
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None
        self._stderr_file = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def _ensure_started(self):
        if self._proc is not None and self._proc.poll() is None:
            return
        self._stderr_file = tempfile.TemporaryFile()
        try:
            self._proc = subprocess.Popen(
                self._argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=self._stderr_file,
            )
        except OSError as e:
            raise BridgeError(f"failed to start detector {self._argv!r}: {e}") from e

    def _diagnostics(self) -> str:
        parts = []
        if self._proc is not None and self._proc.poll() is not None:
            parts.append(f"exit code {self._proc.returncode}")
        if self._stderr_file is not None:
            self._stderr_file.seek(0)
            tail = self._stderr_file.read()[-2000:].decode("utf-8", "replace").strip()
            if tail:
                parts.append(f"stderr: {tail}")
        return "; ".join(parts) if parts else "no diagnostics captured"

    def _read_line(self) -> bytes:
        proc = self._proc
        sel = selectors.DefaultSelector()
        sel.register(proc.stdout, selectors.EVENT_READ)
        deadline = time.monotonic() + self._timeout
        buf = bytearray()
        try:
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise BridgeError(
                        f"detector timed out after {self._timeout:.0f}s ({self._diagnostics()})"
                    )
                if not sel.select(remaining):
                    continue
                chunk = os.read(proc.stdout.fileno(), 65536)
                if not chunk:
                    proc.wait(timeout=5)
                    raise BridgeError(
                        f"detector closed its output stream ({self._diagnostics()})"
                    )
                buf.extend(chunk)
                nl = buf.find(b"\n")
                if nl >= 0:
                    if len(buf) > nl + 1:
                        raise BridgeError(
                            "detector sent more than one line per request"
                        )
                    return bytes(buf[:nl])
        finally:
            sel.close()

    def detect(self, image_path, width: int, height: int) -> dict[int, tuple[float, float]]:
        """Run detection on one exported raster; returns index -> (col, row)."""
        request = json.dumps(
            {"image_path": str(os.path.abspath(image_path)), "width": width, "height": height}
        )
        with self._lock:
            self._ensure_started()
            proc = self._proc
            try:
                proc.stdin.write(request.encode("utf-8") + b"\n")
                proc.stdin.flush()
            except (BrokenPipeError, OSError) as e:
                raise BridgeError(f"detector pipe broke: {e} ({self._diagnostics()})") from e
            line = self._read_line()

        try:
            response = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise BridgeError(f"malformed detector response: {e} ({line[:200]!r})") from e
        if not isinstance(response, dict) or "detected" not in response:
            raise ProtocolError(f"response missing 'detected' field: {line[:200]!r}")
        if not response["detected"]:
            detail = response.get("error", "detector reported no face")
            raise NoFaceDetected(str(detail))

        raw = response.get("landmarks")
        if not isinstance(raw, list):
            raise ProtocolError("detected response carries no landmark list")
        points: dict[int, tuple[float, float]] = {}
        for item in raw:
            try:
                idx = int(item["index"])
                col = float(item["col"])
                row = float(item["row"])
            except (TypeError, KeyError, ValueError) as e:
                raise ProtocolError(f"bad landmark entry {item!r}: {e}") from e
            if idx < 0 or idx >= N_MODEL_POINTS:
                raise ProtocolError(
                    f"landmark index {idx} outside 0..{N_MODEL_POINTS - 1}"
                )
            if idx in points:
                raise ProtocolError(f"duplicate landmark index {idx}")
            points[idx] = (col, row)
        return points

    def close(self):
        with self._lock:
            proc, self._proc = self._proc, None
            stderr, self._stderr_file = self._stderr_file, None
        if proc is not None:
            try:
                if proc.stdin:
                    proc.stdin.close()
                proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                proc.kill()
                proc.wait()
        if stderr is not None:
            stderr.close()


def detect_landmarks(
    img: ProjectionImage,
    spec: DetectorSpec,
    *,
    truth: LandmarkSet3D | None = None,
    noise_sigma=0.0,
    rng: np.random.Generator | None = None,
    image_path=None,
    detector: ExternalDetector | None = None,
) -> LandmarkSet2D:
    """Detect the registration landmark subset in one rendered view.

    Oracle kind forward-projects ``truth``; external kind sends the
    exported raster at ``image_path`` to the bridge subprocess (a
    caller-provided ``detector`` handle is reused, otherwise a one-shot
    child is spawned from the spec's command).
    """
    if spec.kind == "oracle":
        if truth is None:
            raise ValueError("oracle detection requires ground-truth 3D landmarks")
        missing = [j for j in spec.subset if j not in truth.indices]
        if missing:
            raise ValueError(f"truth does not define subset landmarks {missing}")
        return oracle_project_landmarks(
            truth.select(spec.subset), img.phi, img.config, noise_sigma, rng
        )

    if image_path is None:
        raise ValueError("external detection requires the exported image path")
    cfg = img.config

    def run(handle: ExternalDetector) -> dict[int, tuple[float, float]]:
        return handle.detect(image_path, cfg.image_width, cfg.image_height)

    if detector is not None:
        points = run(detector)
    else:
        with ExternalDetector(spec.external_command) as handle:
            points = run(handle)

    out = []
    for j in spec.subset:
        if j not in points:
            raise ProtocolError(f"detector response lacks subset landmark {j}")
        col, row = points[j]
        if not (-0.5 <= col <= cfg.image_width - 0.5 and -0.5 <= row <= cfg.image_height - 0.5):
            raise ProtocolError(
                f"landmark {j} at ({col}, {row}) lies outside the "
                f"{cfg.image_width}x{cfg.image_height} raster"
            )
        x_world = (col - cfg.s0) * cfg.pixel_pitch
        z_world = (cfg.z0 - row) * cfg.pixel_pitch
        out.append(Landmark2D(j, col, row, x_world, z_world))
    return LandmarkSet2D(tuple(out), source_phi=img.phi)
