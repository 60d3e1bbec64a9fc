"""Kinematic 7-DOF arm (modified DH) with geometric Jacobian.

Reference geometry: S-R-S layout, link lengths 340 / 400 / 400 / 126 mm,
150 mm straight tool along the flange z-axis.  At q = 0 the arm is fully
extended upward and the tool tip sits at (0, 0, 1416) with identity
orientation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import JointLimit
from ..geometry import RigidTransform, so3_exp

_HALF_PI = np.pi / 2

# joint-limit margin: limits are inclusive up to this slack
_LIMIT_EPS = 1e-12


def _default_limits():
    lim = np.array([3.2, 2.1, 3.0, 2.1, 3.0, 2.1, 3.05])
    return np.column_stack([-lim, lim])


@dataclass(frozen=True, eq=False)
class ArmModel:
    a: np.ndarray = field(default_factory=lambda: np.zeros(7))
    alpha: np.ndarray = field(default_factory=lambda: np.array(
        [0.0, -_HALF_PI, _HALF_PI, _HALF_PI, -_HALF_PI, -_HALF_PI, _HALF_PI]))
    d: np.ndarray = field(default_factory=lambda: np.array([340.0, 0.0, 400.0, 0.0, 400.0, 0.0, 126.0]))
    limits: np.ndarray = field(default_factory=_default_limits)
    flange_T_tool: RigidTransform = field(
        default_factory=lambda: RigidTransform.from_translation([0.0, 0.0, 150.0]))
    flange_T_te: RigidTransform = field(
        default_factory=lambda: RigidTransform(so3_exp([0.0, 0.0, 0.6]), [70.0, 0.0, 60.0]))

    def with_tool(self, flange_T_tool: RigidTransform) -> ArmModel:
        return ArmModel(self.a, self.alpha, self.d, self.limits, flange_T_tool, self.flange_T_te)

    def check_limits(self, q):
        q = np.asarray(q, float)
        if q.shape != (7,):
            raise ValueError(f"expected 7 joint values, got shape {q.shape}")
        lo, hi = self.limits[:, 0], self.limits[:, 1]
        bad = np.flatnonzero((q < lo - _LIMIT_EPS) | (q > hi + _LIMIT_EPS))
        if bad.size:
            raise JointLimit(f"joint {int(bad[0]) + 1} at {q[bad[0]]:.4f} rad is outside its limits")
        return q


def _mdh(a, alpha, d, theta):
    ca, sa = np.cos(alpha), np.sin(alpha)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array([[ct, -st, 0.0, a],
                     [st * ca, ct * ca, -sa, -sa * d],
                     [st * sa, ct * sa, ca, ca * d],
                     [0.0, 0.0, 0.0, 1.0]])


def joint_frames(arm: ArmModel, q):
    """Homogeneous base_T_frame_i for i = 1..7 (joint i rotates about frame i's z)."""
    q = arm.check_limits(q)
    out = []
    t = np.eye(4)
    for i in range(7):
        t = t @ _mdh(arm.a[i], arm.alpha[i], arm.d[i], q[i])
        out.append(t)
    return out


def _orthonormalise(m):
    u, _, vt = np.linalg.svd(m)
    return u @ vt


def flange_pose(arm: ArmModel, q) -> RigidTransform:
    t = joint_frames(arm, q)[-1]
    return RigidTransform(_orthonormalise(t[:3, :3]), t[:3, 3])


def forward_kinematics(arm: ArmModel, q) -> RigidTransform:
    """base_T_tool."""
    return flange_pose(arm, q) @ arm.flange_T_tool


def tracker_pose(arm: ArmModel, q) -> RigidTransform:
    """base_T_te for the end-effector tracker."""
    return flange_pose(arm, q) @ arm.flange_T_te


def jacobian(arm: ArmModel, q) -> np.ndarray:
    """6x7 geometric Jacobian of the tool frame, rows (v, w) in the base frame."""
    frames = joint_frames(arm, q)
    tip = (frames[-1] @ arm.flange_T_tool.as_matrix())[:3, 3]
    j = np.empty((6, 7))
    for i, f in enumerate(frames):
        z = f[:3, 2]
        j[:3, i] = np.cross(z, tip - f[:3, 3])
        j[3:, i] = z
    return j
