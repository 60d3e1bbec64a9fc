"""SE(3)/SO(3) helpers shared by every other module.

Rotations are stored as 3x3 matrices, translations in millimetres.
Quaternions (w, x, y, z) only appear at the wire boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InvalidTransform, NonSkewInput

ORTHO_TOL = 1e-9
SKEW_TOL = 1e-6


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _frozen(self.rotation)
        t = _frozen(self.translation).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvalidTransform(f"bad shapes {r.shape}, {t.shape}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidTransform("non-finite transform")
        if np.max(np.abs(r.T @ r - np.eye(3))) >= ORTHO_TOL:
            raise InvalidTransform("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) >= ORTHO_TOL:
            raise InvalidTransform("rotation determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> RigidTransform:
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise InvalidTransform(f"expected 4x4 matrix, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_translation(cls, t) -> RigidTransform:
        return cls(np.eye(3), t)

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
        return cls(so3_exp(rotvec), translation)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        """Map a point (3,) or a stack (n, 3) through the transform."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def apply_vector(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.rotation.T

    def inverse(self) -> RigidTransform:
        return invert(self)

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def allclose(self, other: RigidTransform, atol=1e-9) -> bool:
        return bool(np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
                    and np.allclose(self.translation, other.translation, rtol=0, atol=atol))

    def to_pose7(self) -> tuple:
        """(tx, ty, tz, qw, qx, qy, qz), scalar-first unit quaternion."""
        x, y, z, w = Rotation.from_matrix(self.rotation).as_quat()
        if w < 0:
            x, y, z, w = -x, -y, -z, -w
        return tuple(float(v) for v in (*self.translation, w, x, y, z))

    @classmethod
    def from_pose7(cls, pose) -> RigidTransform:
        tx, ty, tz, qw, qx, qy, qz = pose
        r = Rotation.from_quat([qx, qy, qz, qw]).as_matrix()
        return cls(project_to_so3(r), (tx, ty, tz))

    def __repr__(self):
        rv = so3_log(self.rotation)
        return f"RigidTransform(rotvec={np.round(rv, 6).tolist()}, t={np.round(self.translation, 6).tolist()})"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    r = a.rotation @ b.rotation
    return RigidTransform(r, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def hat(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def vee(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or np.max(np.abs(m + m.T)) >= SKEW_TOL:
        raise NonSkewInput("matrix is not skew-symmetric")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def so3_exp(rotvec) -> np.ndarray:
    w = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(w)
    k = hat(w)
    if theta < 1e-8:
        return np.eye(3) + k + 0.5 * k @ k
    return (np.eye(3) + np.sin(theta) / theta * k
            + (1.0 - np.cos(theta)) / theta**2 * k @ k)


def so3_log(r) -> np.ndarray:
    """Rotation vector of R (angle in [0, pi]).

    At angle pi the axis sign is fixed by the largest-diagonal-element rule
    (that component of the axis is positive).
    """
    r = np.asarray(r, dtype=float)
    c = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    w = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = np.linalg.norm(w)
    theta = np.arctan2(s, c)
    if theta < 1e-6:
        return w * (1.0 + s**2 / 6.0)
    if c > -0.95:
        return w * (theta / s)
    # near pi: sin(theta) is small, recover the axis from the symmetric part
    i = int(np.argmax(np.diag(r)))
    axis = np.empty(3)
    axis[i] = np.sqrt(max((r[i, i] - c) / (1.0 - c), 0.0))
    for j in range(3):
        if j != i:
            axis[j] = (r[i, j] + r[j, i]) / (2.0 * axis[i] * (1.0 - c))
    axis /= np.linalg.norm(axis)
    if s > 1e-12 and axis @ w < 0:
        axis = -axis
    return theta * axis


def orientation_error(r_current, r_target) -> np.ndarray:
    """Rotation vector taking the current frame onto the target, in the current frame."""
    r_current = np.asarray(r_current, dtype=float)
    return so3_log(r_current.T @ np.asarray(r_target, dtype=float))


def project_to_so3(m) -> np.ndarray:
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rot_x(a):
    return so3_exp([a, 0.0, 0.0])


def rot_y(a):
    return so3_exp([0.0, a, 0.0])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def random_transform(rng: np.random.Generator, scale=100.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, 3))
