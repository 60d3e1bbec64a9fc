"""Ground-truth layout of the simulated operating room.

Everything the navigation side would *not* know lives here: the true
camera placement, the true image->tracker transform, the true tool offset.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fixtures import DEFAULT_TRACKER_CENTERS
from ..geometry import RigidTransform, random_rotation, so3_exp
from .arm import ArmModel, forward_kinematics, tracker_pose

HOME_Q = np.array([0.1, 0.6, 0.05, -1.4, 0.05, 1.1, 0.1])

# image (CT) frame -> patient tracker frame
DEFAULT_TP_T_IMG = RigidTransform(so3_exp([0.2, -0.1, 0.4]), [-95.0, -40.0, -70.0])


def default_plan_points():
    """Five coplanar drill points along a gently curved path (image frame, mm)."""
    n = np.array([0.3, -0.2, 0.93])
    n /= np.linalg.norm(n)
    e1 = np.cross(n, [0.0, 0.0, 1.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    c = np.array([110.0, 95.0, 35.0])
    s = np.array([-20.0, -10.0, 0.0, 10.0, 20.0])
    return c + np.outer(s, e1) + np.outer(0.15 * s**2 / 20.0, e2)


@dataclass(frozen=True)
class WorldConfig:
    camera_distance: float = 1000.0  # mm, camera origin to workspace centre
    camera_direction: tuple = (-0.35, -0.75, 0.55)
    planar_offset: tuple = (12.0, -16.0)  # mm, initial tool->target offset in the target plane
    standoff: float = 10.0           # mm, initial tool tip height above the surface
    initial_rotation_deg: float = 2.0

    @classmethod
    def from_dict(cls, d) -> WorldConfig:
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()
              if k in cls.__dataclass_fields__}
        return cls(**kw)

    def to_dict(self):
        return {"camera_distance": self.camera_distance,
                "camera_direction": list(self.camera_direction),
                "planar_offset": list(self.planar_offset), "standoff": self.standoff,
                "initial_rotation_deg": self.initial_rotation_deg}


def look_at(eye, target) -> RigidTransform:
    """Frame at ``eye`` whose z-axis points at ``target``."""
    z = np.asarray(target, float) - np.asarray(eye, float)
    z /= np.linalg.norm(z)
    x = np.cross([0.0, 0.0, 1.0], z)
    if np.linalg.norm(x) < 1e-9:
        x = np.array([1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), eye)


@dataclass(frozen=True, eq=False)
class World:
    arm: ArmModel                     # nominal model used by the controller
    true_arm: ArmModel                # includes the unmodelled tool offset
    base_T_camera: RigidTransform
    tp_T_img: RigidTransform
    tracker_centers: np.ndarray = field(default_factory=lambda: DEFAULT_TRACKER_CENTERS.copy())

    def camera_T_te(self, q) -> RigidTransform:
        return self.base_T_camera.inverse() @ tracker_pose(self.true_arm, q)


def tool_offset(rng: np.random.Generator, magnitude: float) -> RigidTransform:
    if magnitude <= 0:
        return RigidTransform.identity()
    d = rng.normal(size=3)
    return RigidTransform.from_translation(magnitude * d / np.linalg.norm(d))


def build_world(cfg: WorldConfig = WorldConfig(), tool_offset_error=0.0,
                rng: np.random.Generator | None = None) -> World:
    arm = ArmModel()
    rng = rng if rng is not None else np.random.default_rng(0)
    true_arm = arm.with_tool(arm.flange_T_tool @ tool_offset(rng, tool_offset_error))
    centre = forward_kinematics(arm, HOME_Q).translation
    d = np.asarray(cfg.camera_direction, float)
    eye = centre + cfg.camera_distance * d / np.linalg.norm(d)
    return World(arm, true_arm, look_at(eye, centre), DEFAULT_TP_T_IMG)


def random_configurations(rng, n, spread=0.35, centre=HOME_Q, arm: ArmModel | None = None):
    arm = arm or ArmModel()
    out = []
    while len(out) < n:
        q = centre + rng.uniform(-spread, spread, 7)
        if np.all(q > arm.limits[:, 0]) and np.all(q < arm.limits[:, 1]):
            out.append(q)
    return out


def random_rigid(rng, scale):
    return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, 3))
