"""Collaborative controller: admittance along the drill axis, PD tracking in the
orthogonal plane, orientation servo, summed into one joint-velocity command.

Twists are ordered (linear mm/s, angular rad/s) and expressed in the robot
base frame, matching the geometric Jacobian.  ``t_r`` is the 6x6
block-diagonal rotation taking tool/sensor-frame vectors into the base frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import orientation_error

DAMPING = 0.01
DAMPING_FLOOR = 0.01
JOINT_RATE_LIMIT = 1.0  # rad/s


@dataclass(frozen=True, eq=False)
class ControllerGains:
    admittance: float = 1.0  # mm/(s N)
    k: np.ndarray = field(default_factory=lambda: 2.0 * np.eye(3))
    b: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(3))
    k_rot: np.ndarray = field(default_factory=lambda: 2.0 * np.eye(3))

    def __post_init__(self):
        for name in ("k", "b", "k_rot"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float).reshape(3, 3))
        if not self.admittance > 0:
            raise ValueError("admittance must be positive")
        for name in ("k", "k_rot"):
            m = getattr(self, name)
            if not np.allclose(m, m.T) or np.min(np.linalg.eigvalsh(m)) <= 0:
                raise ValueError(f"{name} must be symmetric positive definite")

    @classmethod
    def from_dict(cls, d) -> ControllerGains:
        def mat(v, default):
            if v is None:
                return default
            v = np.asarray(v, float)
            return v * np.eye(3) if v.ndim == 0 else v.reshape(3, 3)
        base = cls()
        return cls(float(d.get("admittance", base.admittance)), mat(d.get("k"), base.k),
                   mat(d.get("b"), base.b), mat(d.get("k_rot"), base.k_rot))

    def to_dict(self):
        return {"admittance": self.admittance, "k": self.k.tolist(),
                "b": self.b.tolist(), "k_rot": self.k_rot.tolist()}


@dataclass(frozen=True)
class ControllerLimits:
    joint_rate: float = JOINT_RATE_LIMIT
    damping: float = DAMPING
    damping_floor: float = DAMPING_FLOOR


@dataclass(frozen=True, eq=False)
class ControllerInput:
    q: np.ndarray
    jacobian: np.ndarray
    t_r: np.ndarray
    f_hri: np.ndarray
    e_t: np.ndarray
    e_t_dot: np.ndarray
    r_r: np.ndarray
    r_t: np.ndarray
    v_k: np.ndarray  # drill axis, tool frame

    def __post_init__(self):
        v = np.asarray(self.v_k, float)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValueError("v_k must be a unit vector")
        if not np.all(np.isfinite(self.jacobian)):
            raise ValueError("non-finite Jacobian")


@dataclass(frozen=True, eq=False)
class JointVelocity:
    qdot: np.ndarray
    q_par: np.ndarray
    q_perp: np.ndarray
    q_rot: np.ndarray
    clamped: bool = False
    fault: str | None = None


def rotation_pair(r) -> np.ndarray:
    t = np.zeros((6, 6))
    t[:3, :3] = r
    t[3:, 3:] = r
    return t


def damped_pinv(j, damping=DAMPING, floor=DAMPING_FLOOR):
    """Pseudoinverse, damped only when the smallest singular value drops below ``floor``.

    Returns (J+, damped?).
    """
    u, s, vt = np.linalg.svd(j, full_matrices=False)
    smin = s[-1]
    lam2 = 0.0 if smin >= floor else damping**2 * (1.0 - (smin / floor) ** 2)
    inv = s / (s**2 + lam2) if lam2 > 0 else 1.0 / s
    return (vt.T * inv) @ u.T, lam2 > 0


def axial_projector(v):
    v = np.asarray(v, float)
    return np.outer(v, v)


def admittance_twist(inp: ControllerInput, gains: ControllerGains) -> np.ndarray:
    f = np.asarray(inp.f_hri, float)[:3]
    v_tool = gains.admittance * axial_projector(inp.v_k) @ f
    return inp.t_r @ np.concatenate([v_tool, np.zeros(3)])


def tracking_twist(inp: ControllerInput, gains: ControllerGains) -> np.ndarray:
    r = inp.t_r[:3, :3]
    u = gains.k @ inp.e_t + gains.b @ inp.e_t_dot
    planar = np.eye(3) - axial_projector(inp.v_k)
    return np.concatenate([r @ planar @ r.T @ u, np.zeros(3)])


def orientation_twist(inp: ControllerInput, gains: ControllerGains) -> np.ndarray:
    w_tool = gains.k_rot @ orientation_error(inp.r_r, inp.r_t)
    return inp.t_r @ np.concatenate([np.zeros(3), w_tool])


def _joint(inp, twist, limits):
    jp, _ = damped_pinv(inp.jacobian, limits.damping, limits.damping_floor)
    return jp @ twist


def admittance_velocity(inp, gains, limits=ControllerLimits()):
    return _joint(inp, admittance_twist(inp, gains), limits)


def tracking_velocity(inp, gains, limits=ControllerLimits()):
    return _joint(inp, tracking_twist(inp, gains), limits)


def orientation_velocity(inp, gains, limits=ControllerLimits()):
    return _joint(inp, orientation_twist(inp, gains), limits)


def controller_step(inp: ControllerInput, gains: ControllerGains,
                    limits: ControllerLimits = ControllerLimits()) -> JointVelocity:
    jp, damped = damped_pinv(inp.jacobian, limits.damping, limits.damping_floor)
    q_par = jp @ admittance_twist(inp, gains)
    q_perp = jp @ tracking_twist(inp, gains)
    q_rot = jp @ orientation_twist(inp, gains)
    qdot = q_par + q_perp + q_rot
    if not np.all(np.isfinite(qdot)):
        return JointVelocity(np.zeros_like(qdot), q_par, q_perp, q_rot, fault="non_finite")
    peak = np.max(np.abs(qdot))
    if damped and peak > limits.joint_rate:
        # near a singularity even the damped inverse asks too much: stop for this tick
        return JointVelocity(np.zeros_like(qdot), q_par, q_perp, q_rot, fault="jacobian_singular")
    clamped = peak > limits.joint_rate
    if clamped:
        qdot = np.clip(qdot, -limits.joint_rate, limits.joint_rate)
    return JointVelocity(qdot, q_par, q_perp, q_rot, clamped=clamped)
