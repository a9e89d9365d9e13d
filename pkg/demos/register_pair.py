"""Register a moved copy of a synthetic head, stage by stage.

Runs the same stages as `faceproj register`, but through the library API
and with prints between them so you can see what each stage contributes.
Takes a few seconds.
"""

import numpy as np

import faceproj as fp


def rodrigues(axis, angle_deg):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    a = np.radians(angle_deg)
    return np.eye(3) + np.sin(a) * k + (1.0 - np.cos(a)) * (k @ k)


def main():
    spec = fp.SyntheticHeadSpec(density=1.0, seed=5)
    surf_a, truth_a = fp.generate_head(spec)
    surf_b, truth_b = fp.generate_head(spec)

    # ground truth: B is A rotated 5 deg about a tilted axis, then shifted
    m = np.eye(4)
    m[:3, :3] = rodrigues((0.2, 1.0, 0.4), 5.0)
    m[:3, 3] = (6.0, -3.0, 2.0)
    motion = fp.RigidTransform.from_matrix(m)
    surf_b = fp.apply_transform(motion, surf_b)
    truth_b = fp.LandmarkSet3D(
        truth_b.indices,
        motion.apply_points(truth_b.points),
        truth_b.quality,
        None if truth_b.normals is None else truth_b.normals @ m[:3, :3].T,
    )

    # stage 1: two shaded views per surface, 2D landmarks with 0.5 px jitter
    angles = fp.default_angles()
    det = fp.DetectorSpec()
    rng = np.random.default_rng(7)
    views = {}
    for name, surf, truth in (("a", surf_a, truth_a), ("b", surf_b, truth_b)):
        views[name] = [
            fp.detect_landmarks(
                fp.render_projection(surf, phi),
                det,
                truth=truth,
                noise_sigma=0.5,
                rng=rng,
            )
            for phi in (angles.phi1, angles.phi2)
        ]

    # stage 2: closed-form lift back to 3D
    lm_a = fp.lift_landmark_set(*views["a"])
    lm_b = fp.lift_landmark_set(*views["b"])
    rms = np.sqrt(np.mean(np.sum((lm_a.points - truth_a.points) ** 2, axis=1)))
    print(f"lifted {len(lm_a.indices)} landmarks per surface, rms vs truth {rms:.3f} mm")

    # stage 3: landmark least-squares, then ICP on the face patches
    coarse = fp.solve_landmark_transform(lm_a, lm_b)
    sub_a = fp.select_subsurface(surf_a, lm_a)
    sub_b = fp.select_subsurface(surf_b, lm_b)
    print(f"face patches: {len(sub_a.points)} / {len(sub_b.points)} points")
    report = fp.icp_refine(sub_a, sub_b, init=coarse, cfg=fp.IcpConfig(max_iterations=80))
    print(f"icp converged after {report.iterations} iterations")

    # stage 4: how well do the surfaces agree, and did we recover the motion
    moved = fp.apply_transform(report.final_transform, sub_a)
    err = fp.surface_error(moved, sub_b, signed=moved.has_normals)
    delta = np.abs(report.final_transform.as_matrix() - motion.as_matrix()).max()
    print(f"surface error: mean {err.e_mean:.4f} mm, worst {err.e_sup:.4f} mm")
    print(f"recovered transform matches the true motion to {delta:.5f}")


if __name__ == "__main__":
    main()
