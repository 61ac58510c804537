"""Procedural desk-scale disk meshes used by the tests and demos.

All generators return raw ``(vertices, faces)`` arrays with faces oriented
counter-clockwise when seen from the outward/upward side.
"""

from __future__ import annotations

import numpy as np


def quad_patch():
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    f = np.array([[0, 1, 2], [0, 2, 3]])
    return v, f


def single_triangle():
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return v, np.array([[0, 1, 2]])


def grid(n, height=None, extent=(1.0, 1.0)):
    """n x n cells over [-ex, ex] x [-ey, ey] with z = height(x, y).

    Diagonals alternate so every corner quad is split through its corner
    vertex (no triangle has three boundary vertices). ``n`` must be even.
    """
    if n < 2 or n % 2:
        raise ValueError("grid needs an even cell count >= 2")
    ex, ey = extent
    xs = np.linspace(-ex, ex, n + 1)
    ys = np.linspace(-ey, ey, n + 1)
    x, y = np.meshgrid(xs, ys, indexing="ij")
    z = np.zeros_like(x) if height is None else height(x, y)
    v = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    faces = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                faces += [[a, b, c], [a, c, d]]
            else:
                faces += [[a, b, d], [b, c, d]]
    return v, np.array(faces)


def plane_patch(n=8, extent=(1.0, 1.0)):
    return grid(n, extent=extent)


def saddle(n=16, a=1.0):
    return grid(n, height=lambda x, y: a * x * y)


def hemisphere(rings=12, radius=1.0):
    """Upper hemisphere from a hexagonal disk triangulation (ring k has 6k vertices).

    Ring k sits at polar angle (pi/2) k / rings, so edge lengths stay nearly
    uniform and a uniform-weight Tutte embedding spaces the rings evenly.
    With ``rings`` even, four boundary vertices land on the square's corners.
    """
    if rings < 1:
        raise ValueError("rings must be >= 1")
    verts = [[0.0, 0.0, radius]]
    start = [0]
    for k in range(1, rings + 1):
        start.append(len(verts))
        theta = 0.5 * np.pi * k / rings
        for j in range(6 * k):
            a = 2.0 * np.pi * j / (6 * k)
            verts.append([radius * np.sin(theta) * np.cos(a), radius * np.sin(theta) * np.sin(a), radius * np.cos(theta)])

    def vid(k, j):
        return 0 if k == 0 else start[k] + j % (6 * k)

    faces = []
    for k in range(1, rings + 1):
        for s in range(6):
            outer = [vid(k, s * k + i) for i in range(k + 1)]
            inner = [vid(k - 1, s * (k - 1) + i) for i in range(k)]
            faces += [[inner[i], outer[i], outer[i + 1]] for i in range(k)]
            faces += [[inner[i], outer[i + 1], inner[i + 1]] for i in range(k - 1)]
    return np.array(verts), np.array(faces)


def icosphere(subdivisions=2):
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return np.array(verts), np.array(faces)


def cut_icosphere(subdivisions=2):
    """Icosphere with its first face removed: a disk with a triangular hole."""
    v, f = icosphere(subdivisions)
    return v, f[1:]


BUNDLED = {
    "quad": quad_patch,
    "plane": plane_patch,
    "hemisphere": hemisphere,
    "saddle": saddle,
    "cut_icosphere": cut_icosphere,
}
