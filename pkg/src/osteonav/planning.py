"""Drill-axis orientation from planned points (PCA) and the drill plan."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePath, RankDeficient
from .geometry import RigidTransform

N_PLANNED_POINTS = 5


@dataclass(frozen=True, eq=False)
class DrillTarget:
    position: np.ndarray
    orientation: np.ndarray  # columns are the tool axes; column 2 is the drill axis

    def pose(self) -> RigidTransform:
        return RigidTransform(self.orientation, self.position)


@dataclass(frozen=True, eq=False)
class DrillPlan:
    targets: list
    normal: np.ndarray


def plan_normal(points) -> np.ndarray:
    """Eigenvector of the centred scatter matrix with the smallest eigenvalue.

    Sign convention: the largest-magnitude component is positive.
    """
    p = np.asarray(points, float)
    if p.ndim != 2 or p.shape[1] != 3 or len(p) < 3:
        raise RankDeficient("need at least 3 points in 3-D")
    d = p - p.mean(axis=0)
    scatter = d.T @ d
    w, v = np.linalg.eigh(scatter)
    if w[1] <= 1e-12 * max(w[2], 1e-300):
        raise RankDeficient("planned points are collinear; plane is undefined")
    n = v[:, 0]
    n = n / np.linalg.norm(n)
    if n[np.argmax(np.abs(n))] < 0:
        n = -n
    return n


def build_drill_plan(points) -> DrillPlan:
    """One target per point, all sharing an orientation whose z-axis is the plan normal.

    The x-axis is the first->last direction projected onto the plane.
    """
    p = np.asarray(points, float)
    n = plan_normal(p)
    path = p[-1] - p[0]
    if np.linalg.norm(path) < 1e-6:
        raise DegeneratePath("first and last planned points coincide")
    x = path - (path @ n) * n
    norm = np.linalg.norm(x)
    if norm < 1e-9:
        raise DegeneratePath("path direction is parallel to the plan normal")
    x /= norm
    y = np.cross(n, x)
    r = np.column_stack([x, y, n])
    return DrillPlan([DrillTarget(q.copy(), r) for q in p], n)
