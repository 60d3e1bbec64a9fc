"""Eye-to-hand calibration (AX = XB, Tsai-Lenz) and the navigation frame chain.

Frame names follow the navigation chain: ``img`` (CT), ``TP`` (patient
tracker), ``Camera`` (optical tracker), ``Base`` (robot base), ``tool``
and ``TE`` (tracker on the end effector).  ``a_T_b`` maps b-coordinates
into a-coordinates.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientMotion, MissingCalibration, StaleMeasurement, TooFewPairs
from .geometry import RigidTransform, hat, so3_log

MAX_PAIR_SKEW_S = 0.0334
MIN_AXIS_ANGLE = np.deg2rad(5.0)
MIN_MOTION_ANGLE = 1e-6
MAX_MEASUREMENT_AGE = 2


@dataclass(frozen=True)
class PosePair:
    """One static calibration sample.

    robot: tool_T_base from kinematics; tracker: camera_T_te from the tracker.
    """
    robot: RigidTransform
    tracker: RigidTransform
    t_robot: float | None = None
    t_tracker: float | None = None

    def __post_init__(self):
        if self.t_robot is not None and self.t_tracker is not None:
            if abs(self.t_robot - self.t_tracker) > MAX_PAIR_SKEW_S:
                raise ValueError("robot and tracker samples are more than one tracker frame apart")


@dataclass(frozen=True, eq=False)
class HandEyeResult:
    x: RigidTransform  # base_T_camera
    max_translation_residual: float
    residuals: np.ndarray = field(repr=False)


def relative_motions(pairs):
    """(A, B) for every unordered pair i < j, with A X = X B and X = base_T_camera.

    A = (tool_T_base_j)^-1 tool_T_base_i,  B = camera_T_te_j (camera_T_te_i)^-1.
    """
    out = []
    for i, j in itertools.combinations(range(len(pairs)), 2):
        a = pairs[j].robot.inverse() @ pairs[i].robot
        b = pairs[j].tracker @ pairs[i].tracker.inverse()
        out.append((a, b))
    return out


def _modified_rodrigues(r):
    rv = so3_log(r)
    angle = np.linalg.norm(rv)
    if angle < 1e-15:
        return np.zeros(3), 0.0
    return 2.0 * np.sin(angle / 2.0) * rv / angle, angle


def _check_motion(motions):
    axes = []
    for a, _ in motions:
        rv = so3_log(a.rotation)
        ang = np.linalg.norm(rv)
        if ang > MIN_MOTION_ANGLE:
            axes.append(rv / ang)
    for u, w in itertools.combinations(axes, 2):
        # axes are lines: u and -u are the same axis
        if np.arcsin(min(1.0, np.linalg.norm(np.cross(u, w)))) >= MIN_AXIS_ANGLE:
            return
    raise InsufficientMotion("need two relative motions with non-parallel rotation axes; "
                             "diversify the sampled poses")


def solve_handeye(pairs) -> HandEyeResult:
    """Solve AX = XB for X = base_T_camera over all pairwise relative motions."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise TooFewPairs(f"need at least 3 pose pairs, got {len(pairs)}")
    motions = relative_motions(pairs)
    _check_motion(motions)

    # rotation: skew(Pa + Pb) x' = Pb - Pa on modified Rodrigues vectors
    rows, rhs = [], []
    for a, b in motions:
        pa, _ = _modified_rodrigues(a.rotation)
        pb, _ = _modified_rodrigues(b.rotation)
        rows.append(hat(pa + pb))
        rhs.append(pb - pa)
    xp, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)
    px = 2.0 * xp / np.sqrt(1.0 + xp @ xp)
    n2 = px @ px
    r = ((1.0 - n2 / 2.0) * np.eye(3)
         + 0.5 * (np.outer(px, px) + np.sqrt(4.0 - n2) * hat(px)))
    # re-orthonormalise against round-off
    u, _, vt = np.linalg.svd(r)
    r = u @ vt

    # translation: (Ra - I) tx = R tb - ta
    rows = [a.rotation - np.eye(3) for a, _ in motions]
    rhs = [r @ b.translation - a.translation for a, b in motions]
    tx, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)

    x = RigidTransform(r, tx)
    res = handeye_residual(x, pairs)
    return HandEyeResult(x, float(res.max()), res)


def handeye_residual(x: RigidTransform, pairs) -> np.ndarray:
    """|translation(A X - X B)| for every relative motion of the given pairs."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise TooFewPairs("need at least 2 pose pairs")
    out = []
    for a, b in relative_motions(pairs):
        ax = a @ x
        xb = x @ b
        out.append(np.linalg.norm(ax.translation - xb.translation))
    return np.asarray(out)


def tracker_T_image(camera_T_img: RigidTransform, camera_T_tp: RigidTransform) -> RigidTransform:
    """Constant img->TP transform from a registration and the TP pose seen at that moment."""
    return camera_T_tp.inverse() @ camera_T_img


def resolve_drill_target(target_img: RigidTransform, camera_T_tp: RigidTransform | None,
                         tp_T_img: RigidTransform | None, base_T_camera: RigidTransform | None,
                         age_frames: int = 0) -> RigidTransform:
    """Target pose in the robot base frame.

    base_T_target = base_T_camera . camera_T_tp . tp_T_img . img_T_target
    """
    if tp_T_img is None or base_T_camera is None:
        raise MissingCalibration("registration and hand-eye calibration are required")
    if camera_T_tp is None:
        raise StaleMeasurement("no patient tracker measurement")
    if age_frames > MAX_MEASUREMENT_AGE:
        raise StaleMeasurement(f"patient tracker measurement is {age_frames} frames old")
    return base_T_camera @ camera_T_tp @ tp_T_img @ target_img


def target_in_image(base_T_target: RigidTransform, camera_T_tp: RigidTransform,
                    tp_T_img: RigidTransform, base_T_camera: RigidTransform) -> RigidTransform:
    """Inverse of the chain in :func:`resolve_drill_target`."""
    return (base_T_camera @ camera_T_tp @ tp_T_img).inverse() @ base_T_target
