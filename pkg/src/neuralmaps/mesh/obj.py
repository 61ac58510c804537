"""Wavefront OBJ reading and writing."""

from __future__ import annotations

import numpy as np

from ..errors import MeshFormatError
from .trimesh import make_mesh


def _index(token, count, lineno):
    i = int(token)
    if i < 0:
        i += count
    else:
        i -= 1
    if not 0 <= i < count:
        raise MeshFormatError(f"line {lineno}: index {token} out of range")
    return i


def read_obj(path):
    """Raw arrays from an OBJ file: vertices, faces (fan-triangulated), normals, uvs.

    Normals and uvs are per-vertex (``None`` when absent). When a face refers
    to a normal/uv by index the value is attached to that face corner's
    vertex; repeated assignments are averaged.
    """
    verts, vns, vts = [], [], []
    corners = []  # (v, vt, vn) per face corner, grouped by polygon
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            tag, args = parts[0], parts[1:]
            try:
                if tag == "v":
                    verts.append([float(x) for x in args[:3]])
                    if len(args) < 3:
                        raise ValueError("vertex needs 3 coordinates")
                elif tag == "vn":
                    vns.append([float(x) for x in args[:3]])
                elif tag == "vt":
                    vts.append([float(x) for x in args[:2]])
                elif tag == "f":
                    if len(args) < 3:
                        raise ValueError("face needs at least 3 corners")
                    poly = []
                    for a in args:
                        fields = a.split("/")
                        v = _index(fields[0], len(verts), lineno)
                        vt = _index(fields[1], len(vts), lineno) if len(fields) > 1 and fields[1] else None
                        vn = _index(fields[2], len(vns), lineno) if len(fields) > 2 and fields[2] else None
                        poly.append((v, vt, vn))
                    corners.append(poly)
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{lineno}: {exc}") from exc
    if not verts:
        raise MeshFormatError(f"{path}: no vertices")
    if not corners:
        raise MeshFormatError(f"{path}: no faces")

    vertices = np.array(verts, dtype=np.float64)
    faces = []
    for poly in corners:
        for k in range(1, len(poly) - 1):
            faces.append([poly[0][0], poly[k][0], poly[k + 1][0]])
    faces = np.array(faces, dtype=np.int64)

    def per_vertex(slot, table, dim):
        if not table or any(c[slot] is None for poly in corners for c in poly):
            return None
        acc = np.zeros((len(vertices), dim))
        cnt = np.zeros(len(vertices))
        tab = np.asarray(table, dtype=np.float64)
        for poly in corners:
            for c in poly:
                acc[c[0]] += tab[c[slot]]
                cnt[c[0]] += 1
        if np.any(cnt == 0):
            return None
        return acc / cnt[:, None]

    normals = per_vertex(2, vns, 3)
    uvs = per_vertex(1, vts, 2)
    return vertices, faces, normals, uvs


def load_obj(path, normalize=True):
    """Load and validate a disk-topology mesh, rescaled to a unit-diagonal box."""
    vertices, faces, normals, _ = read_obj(path)
    return make_mesh(vertices, faces, normals, normalize=normalize)


def write_obj(path, vertices, faces, uvs=None, normals=None):
    """Write an ASCII OBJ; faces reference uv/normal indices equal to vertex indices."""
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        for v in vertices:
            fh.write("v %r %r %r\n" % tuple(map(float, v)))
        if uvs is not None:
            for t in np.asarray(uvs, dtype=np.float64):
                fh.write("vt %r %r\n" % tuple(map(float, t)))
        if normals is not None:
            for n in np.asarray(normals, dtype=np.float64):
                fh.write("vn %r %r %r\n" % tuple(map(float, n)))
        for f in faces + 1:
            if uvs is not None and normals is not None:
                fh.write("f " + " ".join(f"{i}/{i}/{i}" for i in f) + "\n")
            elif uvs is not None:
                fh.write("f " + " ".join(f"{i}/{i}" for i in f) + "\n")
            elif normals is not None:
                fh.write("f " + " ".join(f"{i}//{i}" for i in f) + "\n")
            else:
                fh.write(f"f {f[0]} {f[1]} {f[2]}\n")
