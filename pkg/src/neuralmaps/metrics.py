"""Evaluation statistics: flips, deviations and surface-distance checks."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .domain import Domain
from .mesh.plmap import signed_areas


def grid_triangulation(domain=Domain(), n=64):
    """Regular triangulation of the square (disk: triangles fully inside)."""
    lo, hi = (0.0, 1.0) if domain.kind == "square" else (-1.0, 1.0)
    s = np.linspace(lo, hi, n + 1)
    u, v = np.meshgrid(s, s, indexing="ij")
    pts = np.stack([u.ravel(), v.ravel()], axis=1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b, c, d = idx[:-1, :-1], idx[1:, :-1], idx[1:, 1:], idx[:-1, 1:]
    faces = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    if domain.kind == "disk":
        inside = domain.contains(pts, tol=1e-12)
        faces = faces[inside[faces].all(axis=1)]
    return pts, faces


def flip_count(points_after, faces, reference=None):
    """Triangles whose signed area is not positive after a 2D map.

    With ``reference`` (the pre-image positions) only triangles that were
    positive before are considered.
    """
    after = signed_areas(np.asarray(points_after), faces)
    mask = np.ones(len(faces), dtype=bool) if reference is None else signed_areas(reference, faces) > 0
    flipped = int(np.count_nonzero((after <= 0) & mask))
    return flipped, int(mask.sum())


def flip_percentage(points_after, faces, reference=None):
    flipped, total = flip_count(points_after, faces, reference)
    return 100.0 * flipped / max(total, 1)


def angle_degrees(a, b):
    """Per-row angle between unit vectors, in degrees."""
    c = np.clip(np.einsum("ij,ij->i", a, b), -1.0, 1.0)
    return np.degrees(np.arccos(c))


def nearest_distance(reference_points, query_points):
    """Distance from each query point to its nearest reference point."""
    tree = cKDTree(reference_points)
    d, _ = tree.query(query_points)
    return d


def rmse(a, b):
    return float(np.sqrt(np.mean(np.sum((np.asarray(a) - np.asarray(b)) ** 2, axis=-1))))
