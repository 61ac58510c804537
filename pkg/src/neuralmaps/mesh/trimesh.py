"""Disk-topology triangle meshes: validation, normalization and normals."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import TopologyError

MIN_FACE_AREA = 1e-12


@dataclass
class TriMesh:
    vertices: np.ndarray  # (V, 3), normalized units
    faces: np.ndarray  # (F, 3) int
    normals: np.ndarray  # (V, 3) unit
    # original = normalized * scale + offset
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def to_normalized(self, points):
        return (np.asarray(points, dtype=np.float64) - self.offset) / self.scale

    def to_original(self, points):
        return np.asarray(points, dtype=np.float64) * self.scale + self.offset

    def face_areas(self):
        return face_areas(self.vertices, self.faces)

    def boundary_loop(self):
        return boundary_loops(self.faces)[0]

    def edges(self):
        return unique_edges(self.faces)


def face_normals(vertices, faces, normalize=True):
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    n = np.cross(b - a, c - a)
    if normalize:
        n = n / np.linalg.norm(n, axis=1, keepdims=True)
    return n


def face_areas(vertices, faces):
    return 0.5 * np.linalg.norm(face_normals(vertices, faces, normalize=False), axis=1)


def vertex_normals(vertices, faces):
    """Area-weighted average of incident face normals."""
    fn = face_normals(vertices, faces, normalize=False)
    vn = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(vn, faces[:, k], fn)
    return vn / np.linalg.norm(vn, axis=1, keepdims=True)


def unique_edges(faces):
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def boundary_loops(faces):
    """Boundary vertex loops, each ordered along the face orientation.

    Every loop starts at its lowest vertex index. Loops are returned sorted
    by that starting index.
    """
    half = Counter()
    for f in faces:
        for k in range(3):
            half[(int(f[k]), int(f[(k + 1) % 3]))] += 1
    nxt = {}
    for (a, b) in half:
        if (b, a) not in half:
            if a in nxt:
                raise TopologyError(f"non-manifold vertex {a}: two outgoing boundary edges")
            nxt[a] = b
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        v = nxt[start]
        while v != start:
            if v in seen or v not in nxt:
                raise TopologyError(f"boundary is not a simple loop at vertex {v}")
            loop.append(v)
            seen.add(v)
            v = nxt[v]
        loops.append(np.array(loop))
    return loops


def validate_disk(vertices, faces):
    """Raise :class:`TopologyError` unless the mesh is a manifold disk."""
    n_v = len(vertices)
    if len(faces) == 0:
        raise TopologyError("mesh has no faces")
    if faces.min() < 0 or faces.max() >= n_v:
        raise TopologyError("face index out of range")
    if np.any((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])):
        raise TopologyError("face with repeated vertex")
    used = np.zeros(n_v, dtype=bool)
    used[faces.ravel()] = True
    if not used.all():
        raise TopologyError(f"{int((~used).sum())} unreferenced vertices")

    half = Counter()
    for f in faces:
        for k in range(3):
            half[(int(f[k]), int(f[(k + 1) % 3]))] += 1
    if any(c > 1 for c in half.values()):
        raise TopologyError("non-manifold or inconsistently oriented edge")
    undirected = Counter((min(a, b), max(a, b)) for a, b in half)
    if any(c > 2 for c in undirected.values()):
        raise TopologyError("non-manifold edge shared by more than two faces")

    rows = np.repeat(faces[:, 0], 2)
    cols = faces[:, 1:].ravel()
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_v, n_v))
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise TopologyError(f"mesh has {n_comp} connected components")

    loops = boundary_loops(faces)
    if not loops:
        raise TopologyError("no boundary loop (closed surface is not a disk)")
    if len(loops) > 1:
        raise TopologyError(f"multiple boundary loops ({len(loops)})")
    chi = n_v - len(undirected) + len(faces)
    if chi != 1:
        raise TopologyError(f"genus > 0 (Euler characteristic {chi}, disk needs 1)")
    return loops[0]


def make_mesh(vertices, faces, normals=None, normalize=True):
    """Validate a disk mesh and rescale it to a unit-diagonal box centred at 0."""
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    validate_disk(vertices, faces)
    offset, scale = np.zeros(3), 1.0
    if normalize:
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
        offset = 0.5 * (lo + hi)
        scale = float(np.linalg.norm(hi - lo))
        if scale <= 0:
            raise TopologyError("mesh has zero extent")
        vertices = (vertices - offset) / scale
    areas = face_areas(vertices, faces)
    bad = np.flatnonzero(areas <= MIN_FACE_AREA)
    if bad.size:
        raise TopologyError(f"{bad.size} degenerate faces (first: {int(bad[0])})")
    if normals is None:
        normals = vertex_normals(vertices, faces)
    else:
        normals = np.asarray(normals, dtype=np.float64)
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return TriMesh(vertices, faces, normals, offset, scale)
