"""Synthetic meshes and point sets used by tests, scripts and the simulator."""
from __future__ import annotations

import numpy as np

from .geometry import RigidTransform
from .ingest import TriangleMesh

DEFAULT_LENS_RADIUS = 6.0

# Four lens centres on the patient tracker, tracker frame, mm.
# Pairwise distances are 24.8 ... 78.8 mm, consecutive gaps >= 9 mm.
DEFAULT_TRACKER_CENTERS = np.array([
    [0.0, 0.0, 0.0],
    [45.0, 0.0, 0.0],
    [16.0, 19.0, 0.0],
    [46.0, 64.0, 0.0],
])


def icosphere(subdivisions=2, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Subdivided icosahedron; returns (vertices, triangles).

    Vertices are unique by construction (midpoint cache), so
    ``len(vertices) == 10 * 4**subdivisions + 2``.
    """
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
             [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
             [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
             [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
             [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
             [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [list(np.asarray(v, float) / np.linalg.norm(v)) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = np.add(verts[a], verts[b])
                verts.append(list(m / np.linalg.norm(m)))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    v = np.asarray(verts) * radius + np.asarray(center, float)
    return v, np.asarray(faces, dtype=np.int64)


def icosphere_mesh(subdivisions=2, radius=1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    v, f = icosphere(subdivisions, radius, center)
    return TriangleMesh(v, f)


def cap_mesh(center, radius=DEFAULT_LENS_RADIUS, direction=(0, 0, 1), min_height=0.5,
             subdivisions=4) -> TriangleMesh:
    """Spherical cap: the icosphere faces with every corner at height >= min_height*R.

    Only the spherical top of a lens is modelled; the flat brim is excluded.
    """
    d = np.asarray(direction, float)
    d /= np.linalg.norm(d)
    v, f = icosphere(subdivisions, 1.0)
    keep = np.all((v @ d)[f] >= min_height, axis=1)
    f = f[keep]
    used, inv = np.unique(f, return_inverse=True)
    return TriangleMesh(v[used] * radius + np.asarray(center, float), inv.reshape(-1, 3))


def merge_meshes(meshes) -> TriangleMesh:
    verts, tris, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + off)
        off += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(tris))


def fiducial_scene(centers=DEFAULT_TRACKER_CENTERS, radius=DEFAULT_LENS_RADIUS,
                   pose: RigidTransform | None = None, noise=0.0, rng=None,
                   min_height=0.5, subdivisions=4) -> TriangleMesh:
    """Four lens caps (tracker frame, +z up) mapped through ``pose``, with optional vertex noise."""
    pose = pose or RigidTransform.identity()
    caps = merge_meshes([cap_mesh(c, radius, (0, 0, 1), min_height, subdivisions) for c in centers])
    v = pose.apply(caps.vertices)
    if noise > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        v = v + rng.normal(0.0, noise, v.shape)
    return TriangleMesh(v, caps.triangles)


def sphere_cap_points(rng, center, radius, n, half_angle, direction=None):
    """Uniform samples on a spherical cap of the given half-angle (rad)."""
    if direction is None:
        direction = rng.normal(size=3)
    d = np.asarray(direction, float)
    d /= np.linalg.norm(d)
    z = rng.uniform(np.cos(half_angle), 1.0, n)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    r = np.sqrt(1.0 - z**2)
    local = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    # any orthonormal frame with d as its third axis
    a = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(d, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return np.asarray(center, float) + radius * local @ np.vstack([e1, e2, d])
