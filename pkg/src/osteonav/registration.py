"""Paired-point rigid registration (image frame -> camera frame)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollinearPoints, CountMismatch
from .geometry import RigidTransform


@dataclass(frozen=True, eq=False)
class Registration:
    transform: RigidTransform
    residuals: np.ndarray
    rms: float


def _as_points(p):
    p = np.asarray(p, float)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got {p.shape}")
    return p


def registration_residuals(t: RigidTransform, src, dst):
    """Per-pair distances |t(src_i) - dst_i| and their RMS."""
    src, dst = _as_points(src), _as_points(dst)
    if len(src) != len(dst):
        raise CountMismatch(f"{len(src)} source vs {len(dst)} destination points")
    res = np.linalg.norm(t.apply(src) - dst, axis=1)
    return res, float(np.sqrt(np.mean(res**2)))


def register_paired_points(src, dst) -> Registration:
    """Least-squares rigid transform with dst ~ R src + t (SVD of the cross-covariance)."""
    src, dst = _as_points(src), _as_points(dst)
    if len(src) != len(dst):
        raise CountMismatch(f"{len(src)} source vs {len(dst)} destination points")
    if len(src) < 3:
        raise CollinearPoints("need at least 3 correspondences")
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    ps, pd = src - cs, dst - cd
    sv = np.linalg.svd(ps, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise CollinearPoints("source points are collinear")
    u, _, vt = np.linalg.svd(ps.T @ pd)
    v = vt.T
    if np.linalg.det(v @ u.T) < 0:
        v[:, 2] = -v[:, 2]  # reflection fix on the smallest singular direction
    r = v @ u.T
    t = RigidTransform(r, cd - r @ cs)
    res, rms = registration_residuals(t, src, dst)
    return Registration(t, res, rms)
