"""The canonical 2D domain shared by all maps: unit square (default) or unit disk."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff.dual import relu, sqrt
from .autodiff.tape import where

DOMAIN_KINDS = ("square", "disk")


@dataclass(frozen=True)
class Domain:
    """``square`` is [0, 1]^2; ``disk`` is the unit disk centred at the origin."""

    kind: str = "square"

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain {self.kind!r}; expected one of {DOMAIN_KINDS}")

    @property
    def center(self):
        return np.array([0.5, 0.5]) if self.kind == "square" else np.zeros(2)

    @property
    def perimeter(self):
        return 4.0 if self.kind == "square" else 2.0 * np.pi

    @property
    def corners(self):
        if self.kind != "square":
            raise ValueError("the disk domain has no corners")
        return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

    def boundary_point(self, t):
        """Point at perimeter fraction ``t`` in [0, 1), counter-clockwise.

        The square starts at corner (0, 0); the disk at angle 0.
        """
        t = np.mod(np.asarray(t, dtype=np.float64), 1.0)
        if self.kind == "disk":
            a = 2.0 * np.pi * t
            return np.stack([np.cos(a), np.sin(a)], axis=-1)
        s = 4.0 * t
        side = np.minimum(np.floor(s), 3).astype(int)
        f = s - side
        x = np.choose(side, [f, np.ones_like(f), 1.0 - f, np.zeros_like(f)])
        y = np.choose(side, [np.zeros_like(f), f, np.ones_like(f), 1.0 - f])
        return np.stack([x, y], axis=-1)

    def sample_boundary(self, count, seed=None):
        """Stratified samples along the perimeter: one jittered point per stratum."""
        rng = np.random.default_rng(seed)
        t = (np.arange(count) + rng.uniform(size=count)) / count
        return self.boundary_point(t)

    def sample_interior(self, count, seed=None):
        rng = np.random.default_rng(seed)
        if self.kind == "square":
            return rng.uniform(size=(count, 2))
        r = np.sqrt(rng.uniform(size=count))
        a = rng.uniform(0.0, 2.0 * np.pi, size=count)
        return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)

    def grid(self, n):
        """n x n grid of points covering the domain (disk: clipped to the disk)."""
        if self.kind == "square":
            s = np.linspace(0.0, 1.0, n)
        else:
            s = np.linspace(-1.0, 1.0, n)
        u, v = np.meshgrid(s, s, indexing="xy")
        pts = np.stack([u.ravel(), v.ravel()], axis=-1)
        if self.kind == "disk":
            pts = pts[np.einsum("ij,ij->i", pts, pts) <= 1.0]
        return pts

    def contains(self, points, tol=0.0):
        return self.signed_distance(points) <= tol

    def signed_distance(self, points):
        """Negative inside, zero on the boundary, positive outside."""
        p = np.asarray(points, dtype=np.float64)
        if self.kind == "disk":
            return np.linalg.norm(p, axis=-1) - 1.0
        q = np.abs(p - 0.5) - 0.5
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def squared_signed_distance(self, x, y):
        """sigma(x, y): squared signed distance on per-coordinate arrays or Vars."""
        if self.kind == "disk":
            d = sqrt(x * x + y * y) - 1.0
            return d * d
        # box distance: outside part is |max(q, 0)|, inside part is min(max(qx, qy), 0);
        # exactly one of them is non-zero, so the square splits into three terms
        qx = _abs(x - 0.5) - 0.5
        qy = _abs(y - 0.5) - 0.5
        ox, oy = relu(qx), relu(qy)
        m = where(_raw(qx) > _raw(qy), qx, qy)
        inner = relu(-m)
        return ox * ox + oy * oy + inner * inner

    def rotate_about_center(self, rotation, points):
        """Apply a 2x2 rotation about the domain centre to (B, 2) points."""
        c = self.center
        return (np.asarray(points, dtype=np.float64) - c) @ np.asarray(rotation).T + c


def _raw(x):
    return getattr(x, "value", x)


def _abs(x):
    if hasattr(x, "abs"):
        return x.abs()
    return np.abs(x)
