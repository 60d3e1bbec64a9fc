"""STL reading/writing and vertex sampling for segmented fiducial meshes.

Coordinates are taken to be millimetres (CT convention); STL carries no units.
"""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import EmptyMesh, MalformedStl

MERGE_TOL = 1e-6
FRAMES = ("image", "camera", "base", "tracker")

_BINARY_FACET = np.dtype([("normal", "<f4", (3,)), ("v", "<f4", (3, 3)), ("attr", "<u2")])


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise ValueError("mesh has non-finite coordinates")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def facets(self) -> np.ndarray:
        """(m, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def face_normals(self) -> np.ndarray:
        f = self.facets()
        n = np.cross(f[:, 1] - f[:, 0], f[:, 2] - f[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    frame: str = "image"

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(p) < 1:
            raise ValueError("point cloud must contain at least one point")
        if not np.all(np.isfinite(p)):
            raise ValueError("point cloud has non-finite coordinates")
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}")
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.points)


def merge_vertices(corners: np.ndarray, tol=MERGE_TOL):
    """Weld corner coordinates closer than ``tol``.

    Returns (unique vertices in first-appearance order, index per corner).
    """
    corners = np.asarray(corners, dtype=float).reshape(-1, 3)
    n = len(corners)
    if n == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    pairs = cKDTree(corners).query_pairs(tol, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, label = connected_components(graph, directed=False)
    # relabel components by first appearance so output order is stable
    _, first = np.unique(label, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return corners[np.sort(first)], remap[label]


def mesh_from_facets(facets) -> TriangleMesh:
    facets = np.asarray(facets, dtype=float).reshape(-1, 3, 3)
    verts, idx = merge_vertices(facets.reshape(-1, 3))
    return TriangleMesh(verts, idx.reshape(-1, 3))


def _looks_binary(data: bytes) -> bool:
    if len(data) >= 84:
        (n,) = struct.unpack_from("<I", data, 80)
        if 84 + 50 * n == len(data):
            return True
    return not data.lstrip().startswith(b"solid")


def parse_stl(data: bytes) -> TriangleMesh:
    """Parse a binary or ASCII STL byte string."""
    data = bytes(data)
    if _looks_binary(data):
        return _parse_binary(data)
    return _parse_ascii(data)


def _parse_binary(data: bytes) -> TriangleMesh:
    if len(data) < 84:
        raise MalformedStl(len(data), "truncated binary header")
    (n,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * n
    if len(data) < expected:
        raise MalformedStl(len(data), f"truncated: header declares {n} facets")
    if len(data) > expected:
        raise MalformedStl(expected, f"bad facet count {n}: {len(data) - expected} trailing bytes")
    rec = np.frombuffer(data, dtype=_BINARY_FACET, count=n, offset=84)
    facets = rec["v"].astype(float)
    if not np.all(np.isfinite(facets)):
        bad = int(np.argmax(~np.isfinite(facets).reshape(n, -1).all(axis=1)))
        raise MalformedStl(84 + 50 * bad, "non-finite vertex coordinate")
    return mesh_from_facets(facets)


_TOKEN = re.compile(rb"\S+")


def _parse_ascii(data: bytes) -> TriangleMesh:
    tokens = [(m.start(), m.group()) for m in _TOKEN.finditer(data)]
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(tokens):
            raise MalformedStl(len(data), "unexpected end of file")
        tok = tokens[pos]
        pos += 1
        return tok

    def expect(word):
        off, tok = take()
        if tok.lower() != word:
            raise MalformedStl(off, f"expected {word.decode()!r}, got {tok[:20]!r}")

    def number():
        off, tok = take()
        try:
            x = float(tok)
        except ValueError:
            raise MalformedStl(off, f"non-numeric token {tok[:20]!r}") from None
        if not np.isfinite(x):
            raise MalformedStl(off, "non-finite coordinate")
        return x

    expect(b"solid")
    # optional solid name runs up to the first keyword
    while pos < len(tokens) and tokens[pos][1].lower() not in (b"facet", b"endsolid"):
        pos += 1
    facets = []
    while True:
        off, tok = take()
        word = tok.lower()
        if word == b"endsolid":
            break
        if word != b"facet":
            raise MalformedStl(off, f"expected 'facet' or 'endsolid', got {tok[:20]!r}")
        expect(b"normal")
        for _ in range(3):
            number()
        expect(b"outer")
        expect(b"loop")
        tri = []
        for _ in range(3):
            expect(b"vertex")
            tri.append([number(), number(), number()])
        expect(b"endloop")
        expect(b"endfacet")
        facets.append(tri)
    return mesh_from_facets(np.array(facets, dtype=float).reshape(-1, 3, 3))


def write_binary_stl(mesh: TriangleMesh, header: bytes = b"osteonav binary stl") -> bytes:
    rec = np.zeros(mesh.n_triangles, dtype=_BINARY_FACET)
    rec["normal"] = mesh.face_normals()
    rec["v"] = mesh.facets()
    return header[:80].ljust(80, b" ") + struct.pack("<I", mesh.n_triangles) + rec.tobytes()


def write_ascii_stl(mesh: TriangleMesh, name: str = "osteonav") -> bytes:
    lines = [f"solid {name}"]
    for n, tri in zip(mesh.face_normals(), mesh.facets()):
        lines.append("  facet normal {!r} {!r} {!r}".format(*map(float, n)))
        lines.append("    outer loop")
        for v in tri:
            lines.append("      vertex {!r} {!r} {!r}".format(*map(float, v)))
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    return ("\n".join(lines) + "\n").encode("ascii")


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    f = mesh.facets()
    area_n = np.cross(f[:, 1] - f[:, 0], f[:, 2] - f[:, 0])
    out = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(out, mesh.triangles[:, k], area_n)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    return np.divide(out, norm, out=np.zeros_like(out), where=norm > 0)


def sample_vertices(mesh: TriangleMesh, visible_from=None, frame="image") -> PointCloud:
    """Deduplicated mesh vertices, sorted lexicographically by (x, y, z).

    ``visible_from`` keeps only vertices whose outward normal faces that
    viewpoint, emulating a partial surface view.
    """
    if mesh.n_triangles == 0:
        raise EmptyMesh("mesh has no triangles")
    used = np.unique(mesh.triangles)
    pts = mesh.vertices[used]
    if visible_from is not None:
        n = vertex_normals(mesh)[used]
        keep = np.einsum("ij,ij->i", np.asarray(visible_from, float) - pts, n) > 0
        pts = pts[keep]
        if len(pts) == 0:
            raise EmptyMesh("no vertex is visible from the requested viewpoint")
    # a second weld makes the output independent of triangle order
    pts, _ = merge_vertices(pts)
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    return PointCloud(pts[order], frame)


def read_stl_file(path) -> TriangleMesh:
    with open(path, "rb") as fh:
        return parse_stl(fh.read())
