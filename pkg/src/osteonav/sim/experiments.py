"""Seeded component experiments: registration residuals and hand-eye calibration error."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..calibration import PosePair, handeye_residual, solve_handeye, HandEyeResult
from ..fiducial import TrackerModel, extract_centers, sort_centers
from ..fixtures import DEFAULT_TRACKER_CENTERS, fiducial_scene
from ..geometry import RigidTransform
from ..ingest import sample_vertices
from ..registration import Registration, register_paired_points
from .arm import forward_kinematics
from .ots import perturb
from .world import World, build_world, random_configurations, random_rigid


def registration_trial(seed: int, sigma: float, centers=DEFAULT_TRACKER_CENTERS) -> Registration:
    """Register noisy image-frame centres to exact camera-frame centres.

    Isotropic Gaussian noise of ``sigma`` mm per axis is added to each
    image-frame centre (CT extraction error).
    """
    rng = np.random.default_rng(seed)
    img_T_tp = random_rigid(rng, 150.0)
    cam_T_tp = random_rigid(rng, 1000.0)
    img = img_T_tp.apply(centers) + rng.normal(0.0, sigma, (len(centers), 3))
    cam = cam_T_tp.apply(centers)
    return register_paired_points(img, cam)


def image_centers_from_ct(world: World, rng, vertex_noise=0.05, center_sigma=0.0, seed=0):
    """Run the STL-level pipeline on a synthetic CT fiducial mesh.

    Returns image-frame centres ordered to match the tracker model, plus the
    sorting discrepancy.
    """
    img_T_tp = world.tp_T_img.inverse()
    mesh = fiducial_scene(world.tracker_centers, pose=img_T_tp, noise=vertex_noise, rng=rng)
    fits = extract_centers(sample_vertices(mesh), 4, seed=seed)
    found = np.array([f.center for f in fits])
    found = found + rng.normal(0.0, center_sigma, found.shape)
    perm, disc = sort_centers(found, TrackerModel(world.tracker_centers))
    return found[list(perm)], disc


@dataclass(frozen=True, eq=False)
class CalibrationTrial:
    result: HandEyeResult
    test_residuals: np.ndarray
    true_x: RigidTransform

    @property
    def max_test_residual(self) -> float:
        return float(self.test_residuals.max())

    @property
    def rotation_error_deg(self) -> float:
        from ..geometry import orientation_error
        return float(np.rad2deg(np.linalg.norm(
            orientation_error(self.result.x.rotation, self.true_x.rotation))))


def collect_pose_pairs(world: World, configs, rng, sigma_t=0.0, sigma_r=0.0):
    pairs = []
    for q in configs:
        tool_T_base = forward_kinematics(world.arm, q).inverse()
        cam_T_te = world.camera_T_te(q)
        if sigma_t > 0 or sigma_r > 0:
            cam_T_te = perturb(cam_T_te, rng, sigma_t, sigma_r)
        pairs.append(PosePair(tool_T_base, cam_T_te))
    return pairs


def calibration_trial(seed: int, sigma_t=0.15, sigma_r=0.05, n_cal=5, n_test=5,
                      world: World | None = None) -> CalibrationTrial:
    """Calibrate from n_cal poses, then score |AX - XB| over n_test held-out poses."""
    rng = np.random.default_rng(seed)
    world = world or build_world()
    configs = random_configurations(rng, n_cal + n_test)
    cal = collect_pose_pairs(world, configs[:n_cal], rng, sigma_t, sigma_r)
    test = collect_pose_pairs(world, configs[n_cal:], rng, sigma_t, sigma_r)
    result = solve_handeye(cal)
    return CalibrationTrial(result, handeye_residual(result.x, test), world.base_T_camera)
