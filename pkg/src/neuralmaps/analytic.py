"""Closed-form parametric surfaces over the unit square with exact Jacobians.

Every surface provides ``components(u, v)``, returning the position and the
3x2 Jacobian as nested lists built from generic arithmetic. The same code
evaluates plain arrays and taped Vars, which is what composition needs when
the surface is evaluated at the output of a trainable warp.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import smallmat as sm
from .autodiff.dual import cos, sin, sqrt
from .domain import Domain
from .energies import EPS
from .errors import OutOfDomainError

KINDS = {
    "plane": {},
    "scaled_plane": {"s": 2.0},
    "hemisphere": {"r": 1.0, "extent": 0.6},
    "cylinder_patch": {"r": 1.0, "arc": np.pi, "height": None},
    "saddle": {"a": 1.0},
    "torus_patch": {"R": 2.0, "r": 1.0, "arc_u": np.pi, "arc_v": np.pi},
}


@dataclass(frozen=True)
class AnalyticSurface:
    """A surface given by a closed-form map from the domain square to R^3.

    hemisphere
        ``(a, b, sqrt(r^2 - a^2 - b^2))`` with ``a = r * extent * (2u - 1)``
        (likewise ``b``); ``extent < 1/sqrt(2)`` keeps the square inside the
        disk of radius ``r`` so the square root never degenerates.
    cylinder_patch
        angle ``arc * (u - 1/2)``, height ``height * (v - 1/2)``; the default
        height ``r * arc`` makes the parameterization an isometry.
    saddle
        ``(x, y, a x y)`` with ``x = u - 1/2``, ``y = v - 1/2``.
    torus_patch
        angles ``arc_u (u - 1/2)`` around the axis and ``arc_v (v - 1/2)``
        around the tube.
    """

    kind: str
    params: dict = field(default_factory=dict)
    domain: Domain = Domain()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown analytic surface {self.kind!r}")
        merged = dict(KINDS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged.update(self.params)
        if self.kind == "cylinder_patch" and merged["height"] is None:
            merged["height"] = merged["r"] * merged["arc"]
        for k, v in merged.items():
            if k != "extent" and not v > 0:
                raise ValueError(f"{self.kind}: parameter {k} must be positive")
        if self.kind == "hemisphere" and not 0 < merged["extent"] < 1 / np.sqrt(2):
            raise ValueError("hemisphere extent must lie in (0, 1/sqrt(2))")
        if self.kind == "torus_patch" and merged["R"] <= merged["r"]:
            raise ValueError("torus_patch needs R > r")
        object.__setattr__(self, "params", merged)

    # -- serialization ---------------------------------------------------

    def to_dict(self):
        return {"kind": self.kind, **{k: float(v) for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d, domain=Domain()):
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, d, domain)

    # -- evaluation ------------------------------------------------------

    def components(self, u, v):
        """Position [x, y, z] and Jacobian (3x2 nested list) at (u, v)."""
        P = self.params
        k = self.kind
        if k == "plane":
            return [u, v, 0.0 * u], [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]
        if k == "scaled_plane":
            s = P["s"]
            return [s * u, s * v, 0.0 * u], [[s, 0.0], [0.0, s], [0.0, 0.0]]
        if k == "hemisphere":
            r, c = P["r"], 2.0 * P["r"] * P["extent"]
            a = c * (u - 0.5)
            b = c * (v - 0.5)
            z = sqrt(r * r - a * a - b * b)
            return [a, b, z], [[c, 0.0], [0.0, c], [-c * a / z, -c * b / z]]
        if k == "cylinder_patch":
            r, arc, hgt = P["r"], P["arc"], P["height"]
            t = arc * (u - 0.5)
            ct, st = cos(t), sin(t)
            return [r * ct, r * st, hgt * (v - 0.5)], [[-r * arc * st, 0.0], [r * arc * ct, 0.0], [0.0, hgt]]
        if k == "saddle":
            a = P["a"]
            x, y = u - 0.5, v - 0.5
            return [x, y, a * x * y], [[1.0, 0.0], [0.0, 1.0], [a * y, a * x]]
        if k == "torus_patch":
            R, r, au, av = P["R"], P["r"], P["arc_u"], P["arc_v"]
            th = au * (u - 0.5)
            ph = av * (v - 0.5)
            cth, sth, cph, sph = cos(th), sin(th), cos(ph), sin(ph)
            ring = R + r * cph
            pos = [ring * cth, ring * sth, r * sph]
            jac = [
                [-au * ring * sth, -av * r * sph * cth],
                [au * ring * cth, -av * r * sph * sth],
                [0.0, av * r * cph],
            ]
            return pos, jac
        raise AssertionError(k)

    def _check(self, p, check):
        p = np.asarray(p, dtype=np.float64)
        if check:
            sd = self.domain.signed_distance(np.atleast_2d(p))
            if np.any(sd > 1e-9):
                raise OutOfDomainError(f"{self.kind}: {int((sd > 1e-9).sum())} points outside the domain")
        return p

    def eval(self, p, check=True):
        p = self._check(p, check)
        pos, _ = self.components(p[..., 0], p[..., 1])
        return np.stack(np.broadcast_arrays(*pos), axis=-1)

    def eval_jacobian(self, p, check=True):
        p = self._check(p, check)
        _, jac = self.components(p[..., 0], p[..., 1])
        shape = p.shape[:-1]
        rows = [np.stack([np.broadcast_to(np.asarray(x, dtype=np.float64), shape) for x in row], axis=-1) for row in jac]
        return np.stack(rows, axis=-2)

    def metric(self, p):
        """Closed-form first fundamental form (..., 2, 2)."""
        P = self.params
        p = np.asarray(p, dtype=np.float64)
        u, v = p[..., 0], p[..., 1]
        one = np.ones_like(u)
        k = self.kind
        if k == "plane":
            g = [[one, 0 * one], [0 * one, one]]
        elif k == "scaled_plane":
            s2 = P["s"] ** 2
            g = [[s2 * one, 0 * one], [0 * one, s2 * one]]
        elif k == "hemisphere":
            r, c = P["r"], 2.0 * P["r"] * P["extent"]
            a, b = c * (u - 0.5), c * (v - 0.5)
            z2 = r * r - a * a - b * b
            g = [[c * c * (1 + a * a / z2), c * c * a * b / z2], [c * c * a * b / z2, c * c * (1 + b * b / z2)]]
        elif k == "cylinder_patch":
            g = [[(P["r"] * P["arc"]) ** 2 * one, 0 * one], [0 * one, P["height"] ** 2 * one]]
        elif k == "saddle":
            a, x, y = P["a"], u - 0.5, v - 0.5
            g = [[1 + a * a * y * y, a * a * x * y], [a * a * x * y, 1 + a * a * x * x]]
        else:
            R, r, au, av = P["R"], P["r"], P["arc_u"], P["arc_v"]
            ring = R + r * np.cos(av * (v - 0.5))
            g = [[(au * ring) ** 2, 0 * one], [0 * one, (av * r) ** 2 * one]]
        return sm.to_array(g)

    def normal(self, p):
        """Outward unit normal: normalized cross product of the Jacobian columns."""
        J = self.eval_jacobian(p)
        n = np.cross(J[..., 0], J[..., 1])
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


def _metric_eigenvalues(M):
    return np.linalg.eigvalsh(M)


def exact_dirichlet_density(surface: AnalyticSurface, p, eps=EPS):
    """Symmetric Dirichlet density from the eigenvalues of the closed-form metric."""
    lam = _metric_eigenvalues(surface.metric(p))
    return lam.sum(axis=-1) + (1.0 / (lam + eps)).sum(axis=-1)


def exact_conformal_density(surface: AnalyticSurface, p):
    lam = _metric_eigenvalues(surface.metric(p))
    s = lam.sum(axis=-1) / (lam**2).sum(axis=-1)
    return ((s[..., None] * lam - 1.0) ** 2).sum(axis=-1)
