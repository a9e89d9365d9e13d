import json
import math
import sys
import textwrap

import numpy as np
import pytest

from faceproj.detect import (
    DetectorSpec,
    ExternalDetector,
    detect_landmarks,
    oracle_project_landmarks,
)
from faceproj.errors import BridgeError, NoFaceDetected, ProtocolError
from faceproj.geometry import SurfacePointSet, rotation_about_z
from faceproj.landmarks import DEFAULT_SUBSET, LandmarkSet3D
from faceproj.projection import ProjectionConfig, render_projection, save_projection


def resolved_cfg(**kw):
    defaults = dict(
        image_width=64,
        image_height=64,
        pixel_pitch=2.0,
        plane_offset=500.0,
        light_position=(0.0, 1000.0, 0.0),
        s0=31.5,
        z0=31.5,
        splat_radius=1.5,
    )
    defaults.update(kw)
    return ProjectionConfig(**defaults)


def truth_set(indices=DEFAULT_SUBSET):
    rng = np.random.default_rng(71)
    az = rng.uniform(-0.4, 0.4, size=len(indices))
    el = rng.uniform(-0.4, 0.4, size=len(indices))
    pts = 50.0 * np.stack(
        [np.sin(az) * np.cos(el), np.cos(az) * np.cos(el), np.sin(el)], axis=1
    )
    return LandmarkSet3D(tuple(indices), pts)


class TestDetectorSpec:
    def test_defaults(self):
        spec = DetectorSpec()
        assert spec.kind == "oracle"
        assert spec.subset == DEFAULT_SUBSET

    def test_validation(self):
        with pytest.raises(ValueError):
            DetectorSpec(kind="magic")
        with pytest.raises(ValueError):
            DetectorSpec(kind="external")  # no command
        with pytest.raises(ValueError):
            DetectorSpec(subset=(1, 2))  # too few
        with pytest.raises(ValueError):
            DetectorSpec(subset=(1, 2, 2))  # duplicate
        with pytest.raises(ValueError):
            DetectorSpec(subset=(1, 2, 99))  # out of model range

    def test_subset_sorted(self):
        assert DetectorSpec(subset=(42, 27, 30)).subset == (27, 30, 42)


class TestOracleProjection:
    def test_frontal_axis_point_maps_to_center(self):
        # (0, 50, 0) at phi = 0 lands exactly on (s0, z0)
        cfg = resolved_cfg()
        truth = LandmarkSet3D((27, 28, 29), np.array([[0.0, 50.0, 0.0]] * 3))
        out = oracle_project_landmarks(truth, 0.0, cfg)
        assert out.landmarks[0].col == pytest.approx(cfg.s0)
        assert out.landmarks[0].row == pytest.approx(cfg.z0)

    def test_rotated_axis_point_column(self):
        cfg = resolved_cfg()
        truth = LandmarkSet3D((27, 28, 29), np.array([[0.0, 50.0, 0.0]] * 3))
        phi = math.pi / 9
        out = oracle_project_landmarks(truth, phi, cfg)
        expected_col = cfg.s0 + (-50.0 * math.sin(phi)) / cfg.pixel_pitch
        assert out.landmarks[0].col == pytest.approx(expected_col, abs=1e-12)

    def test_noise_free_world_matches_rotation(self):
        cfg = resolved_cfg()
        truth = truth_set()
        phi = 0.3
        out = oracle_project_landmarks(truth, phi, cfg)
        rot = rotation_about_z(phi)
        for lm, p in zip(out.landmarks, truth.points):
            pr = rot @ p
            assert lm.x_world == pytest.approx(pr[0], abs=1e-9)
            assert lm.z_world == pytest.approx(pr[2], abs=1e-9)

    def test_z_consistent_across_views(self):
        cfg = resolved_cfg()
        truth = truth_set()
        a = oracle_project_landmarks(truth, math.pi / 9, cfg)
        b = oracle_project_landmarks(truth, -math.pi / 9, cfg)
        np.testing.assert_allclose(a.z_world, b.z_world, atol=1e-9)

    def test_deterministic_without_noise(self):
        cfg = resolved_cfg()
        truth = truth_set()
        a = oracle_project_landmarks(truth, 0.1, cfg)
        b = oracle_project_landmarks(truth, 0.1, cfg)
        assert a == b

    def test_noise_statistics(self):
        # mean |pixel deviation| of N(0,1) noise is sqrt(2/pi) = 0.7979
        cfg = resolved_cfg(image_width=2048, image_height=2048, s0=1023.5, z0=1023.5)
        truth = truth_set()
        rng = np.random.default_rng(72)
        clean = oracle_project_landmarks(truth, 0.0, cfg)
        devs = []
        for _ in range(1000):
            noisy = oracle_project_landmarks(truth, 0.0, cfg, noise_sigma=1.0, rng=rng)
            for lm_noisy, lm_clean in zip(noisy.landmarks, clean.landmarks):
                devs.append(abs(lm_noisy.col - lm_clean.col))
                devs.append(abs(lm_noisy.row - lm_clean.row))
        assert np.mean(devs) == pytest.approx(math.sqrt(2 / math.pi), rel=0.02)

    def test_per_landmark_noise_scales(self):
        cfg = resolved_cfg(image_width=4096, image_height=4096, s0=2047.5, z0=2047.5)
        truth = truth_set()
        sigma = np.linspace(0.0, 8.0, len(truth.indices))
        rng = np.random.default_rng(73)
        clean = oracle_project_landmarks(truth, 0.0, cfg)
        total = np.zeros(len(truth.indices))
        n = 400
        for _ in range(n):
            noisy = oracle_project_landmarks(truth, 0.0, cfg, noise_sigma=sigma, rng=rng)
            total += [
                abs(a.col - b.col) for a, b in zip(noisy.landmarks, clean.landmarks)
            ]
        mean_dev = total / n
        assert mean_dev[0] == 0.0
        # later landmarks carry proportionally more noise
        expected = sigma * math.sqrt(2 / math.pi)
        np.testing.assert_allclose(mean_dev[1:], expected[1:], rtol=0.25)

    def test_off_raster_excluded(self):
        cfg = resolved_cfg(image_width=16, image_height=16, s0=7.5, z0=7.5)
        truth = LandmarkSet3D(
            (27, 28, 29),
            np.array([[0.0, 50.0, 0.0], [500.0, 50.0, 0.0], [0.0, 50.0, 4.0]]),
        )
        out = oracle_project_landmarks(truth, 0.0, cfg)
        assert out.excluded == (28,)
        assert out.indices == (27, 29)

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            oracle_project_landmarks(truth_set(), 0.0, resolved_cfg(), noise_sigma=-1.0)

    def test_unresolved_config_rejected(self):
        with pytest.raises(ValueError):
            oracle_project_landmarks(truth_set(), 0.0, ProjectionConfig())


# ---------------------------------------------------------------------------
# external bridge
# ---------------------------------------------------------------------------

def stub_command(tmp_path, body, name="stub.py"):
    """Write a detector stub whose per-request behavior is given by `body`.

    `body` sees `req` (parsed request dict) and must print one response line.
    """
    script = tmp_path / name
    script.write_text(
        "import json, sys, time\n"
        "for line in sys.stdin:\n"
        "    req = json.loads(line)\n" + textwrap.indent(textwrap.dedent(body), "    ")
    )
    return f"{sys.executable} {script}"


ECHO_BODY = """\
pts = [{"index": i, "col": 10.0 + (i % 8), "row": 20.0 + (i // 8)} for i in range(68)]
print(json.dumps({"detected": True, "landmarks": pts}), flush=True)
"""


def rendered_view(tmp_path):
    rng = np.random.default_rng(74)
    pts = rng.uniform(-20.0, 20.0, size=(200, 3))
    nrm = rng.normal(size=(200, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    img = render_projection(SurfacePointSet(pts, nrm), 0.0, resolved_cfg())
    image_path, _ = save_projection(img, tmp_path / "view")
    return img, image_path


class TestExternalBridge:
    def test_echo_stub_round_trip(self, tmp_path):
        img, image_path = rendered_view(tmp_path)
        spec = DetectorSpec(kind="external", external_command=stub_command(tmp_path, ECHO_BODY))
        out = detect_landmarks(img, spec, image_path=image_path)
        assert out.indices == DEFAULT_SUBSET
        cfg = img.config
        for lm in out.landmarks:
            assert lm.col == 10.0 + (lm.index % 8)
            assert lm.row == 20.0 + (lm.index // 8)
            assert lm.x_world == pytest.approx((lm.col - cfg.s0) * cfg.pixel_pitch)
            assert lm.z_world == pytest.approx((cfg.z0 - lm.row) * cfg.pixel_pitch)

    def test_request_contents(self, tmp_path):
        img, image_path = rendered_view(tmp_path)
        seen = tmp_path / "seen.json"
        body = f"""\
open({str(seen)!r}, "w").write(json.dumps(req))
{ECHO_BODY}"""
        spec = DetectorSpec(kind="external", external_command=stub_command(tmp_path, body))
        detect_landmarks(img, spec, image_path=image_path)
        req = json.loads(seen.read_text())
        assert req["width"] == 64 and req["height"] == 64
        assert req["image_path"].endswith("view.png")

    def test_no_face_detected(self, tmp_path):
        img, image_path = rendered_view(tmp_path)
        body = 'print(json.dumps({"detected": False, "error": "blank image"}), flush=True)\n'
        spec = DetectorSpec(kind="external", external_command=stub_command(tmp_path, body))
        with pytest.raises(NoFaceDetected, match="blank image"):
            detect_landmarks(img, spec, image_path=image_path)

    def test_out_of_range_index(self, tmp_path):
        img, image_path = rendered_view(tmp_path)
        body = (
            'pts = [{"index": i, "col": 1.0, "row": 1.0} for i in range(67)]\n'
            'pts.append({"index": 99, "col": 1.0, "row": 1.0})\n'
            'print(json.dumps({"detected": True, "landmarks": pts}), flush=True)\n'
        )
        spec = DetectorSpec(kind="external", external_command=stub_command(tmp_path, body))
        with pytest.raises(ProtocolError, match="99"):
            detect_landmarks(img, spec, image_path=image_path)

    def test_missing_subset_landmark(self, tmp_path):
        img, image_path = rendered_view(tmp_path)
        body = (
            'pts = [{"index": i, "col": 1.0, "row": 1.0} for i in range(20)]\n'
            'print(json.dumps({"detected": True, "landmarks": pts}), flush=True)\n'
        )
        spec = DetectorSpec(kind="external", external_command=stub_command(tmp_path, body))
        with pytest.raises(ProtocolError, match="lacks subset landmark"):
            detect_landmarks(img, spec, image_path=image_path)

    def test_malformed_json(self, tmp_path):
        img, image_path = rendered_view(tmp_path)
        body = 'print("this is not json", flush=True)\n'
        spec = DetectorSpec(kind="external", external_command=stub_command(tmp_path, body))
        with pytest.raises(BridgeError, match="malformed"):
            detect_landmarks(img, spec, image_path=image_path)

    def test_crashing_detector(self, tmp_path):
        img, image_path = rendered_view(tmp_path)
        body = 'sys.stderr.write("model weights not found\\n"); sys.exit(3)\n'
        spec = DetectorSpec(kind="external", external_command=stub_command(tmp_path, body))
        with pytest.raises(BridgeError, match="model weights not found"):
            detect_landmarks(img, spec, image_path=image_path)

    def test_timeout(self, tmp_path):
        img, image_path = rendered_view(tmp_path)
        body = "time.sleep(30)\n"
        cmd = stub_command(tmp_path, body)
        with ExternalDetector(cmd, timeout=0.5) as det:
            with pytest.raises(BridgeError, match="timed out"):
                det.detect(image_path, 64, 64)

    def test_handle_reuse_across_calls(self, tmp_path):
        img, image_path = rendered_view(tmp_path)
        spec = DetectorSpec(kind="external", external_command=stub_command(tmp_path, ECHO_BODY))
        with ExternalDetector(spec.external_command) as det:
            a = detect_landmarks(img, spec, image_path=image_path, detector=det)
            b = detect_landmarks(img, spec, image_path=image_path, detector=det)
        assert a == b

    def test_landmark_outside_raster_rejected(self, tmp_path):
        img, image_path = rendered_view(tmp_path)
        body = (
            'pts = [{"index": i, "col": 500.0, "row": 1.0} for i in range(68)]\n'
            'print(json.dumps({"detected": True, "landmarks": pts}), flush=True)\n'
        )
        spec = DetectorSpec(kind="external", external_command=stub_command(tmp_path, body))
        with pytest.raises(ProtocolError, match="outside"):
            detect_landmarks(img, spec, image_path=image_path)


class TestDetectLandmarksOracle:
    def test_oracle_requires_truth(self, tmp_path):
        img, _ = rendered_view(tmp_path)
        with pytest.raises(ValueError, match="ground-truth"):
            detect_landmarks(img, DetectorSpec())

    def test_oracle_uses_image_phi(self, tmp_path):
        rng = np.random.default_rng(75)
        pts = rng.uniform(-20.0, 20.0, size=(100, 3))
        nrm = rng.normal(size=(100, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        phi = 0.25
        img = render_projection(SurfacePointSet(pts, nrm), phi, resolved_cfg())
        truth = truth_set()
        out = detect_landmarks(img, DetectorSpec(), truth=truth)
        direct = oracle_project_landmarks(truth.select(DEFAULT_SUBSET), phi, img.config)
        assert out == direct

    def test_truth_missing_subset_index(self, tmp_path):
        img, _ = rendered_view(tmp_path)
        truth = LandmarkSet3D((0, 1, 2), np.eye(3) * 10 + np.array([0, 50, 0]))
        with pytest.raises(ValueError, match="subset"):
            detect_landmarks(img, DetectorSpec(), truth=truth)
