"""Distortion densities, constraint energies and Monte-Carlo integration.

Density functions take a 2x2 metric ``M = J^T J`` either as a numpy array of
shape (..., 2, 2) or as a nested list whose entries are per-sample arrays or
taped Vars (see :mod:`neuralmaps.autodiff.smallmat`). Nested inputs give
nested-friendly outputs, so the same code serves evaluation and training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import smallmat as sm
from .autodiff.dual import exp
from .autodiff.tape import Var, where
from .domain import Domain
from .errors import DegenerateJacobianError, NonFiniteDensityError

EPS = 0.01


@dataclass(frozen=True)
class EnergyWeights:
    normal: float = 0.01
    boundary: float = 1e6
    injectivity: float = 1e2
    keypoint: float = 1e3
    eps: float = EPS

    def __post_init__(self):
        for name in ("normal", "boundary", "injectivity", "keypoint", "eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"weight {name!r} must be positive")


@dataclass
class JacobianFrame:
    J: np.ndarray  # (..., n, 2)
    M: np.ndarray  # (..., 2, 2)
    det: np.ndarray | None  # 2x2 Jacobians only
    tangent_basis: np.ndarray | None  # (..., 3, 2) for 3D Jacobians


def jacobian_frame(J) -> JacobianFrame:
    J = np.asarray(J, dtype=np.float64)
    M = np.swapaxes(J, -1, -2) @ J
    det = basis = None
    if J.shape[-2] == 2:
        det = np.linalg.det(J)
    else:
        basis = sm.to_array(sm.orthonormal_frame(sm.from_array(J)))
    return JacobianFrame(J, M, det, basis)


def _as_nested(M):
    if isinstance(M, np.ndarray) or isinstance(M, (int, float)):
        return sm.from_array(M), True
    return M, False


def _values(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


def dirichlet_density(M, eps=EPS):
    """trace(M) + trace((M + eps I)^-1)."""
    m, numeric = _as_nested(M)
    a, b = m[0][0] + eps, m[1][1] + eps
    det = a * b - m[0][1] * m[1][0]
    out = m[0][0] + m[1][1] + (a + b) / det
    return np.asarray(out) if numeric else out


def conformal_density(M):
    """|| trace(M) / ||M||^2 * M - I ||^2 with Frobenius norms."""
    m, numeric = _as_nested(M)
    norm_sq = sm.frobenius_sq(m)
    if np.any(_values(norm_sq) == 0):
        raise DegenerateJacobianError("conformal density undefined for a zero metric")
    # expanding the norm gives 2 - tr(M)^2 / ||M||^2; the numerator below is
    # 2 ||M||^2 - tr(M)^2 without cancellation, so similarities give exactly 0
    diff = m[0][0] - m[1][1]
    out = (diff * diff + 2.0 * (m[0][1] * m[0][1] + m[1][0] * m[1][0])) / norm_sq
    return np.asarray(out) if numeric else out


DENSITIES = {"iso": dirichlet_density, "conformal": conformal_density}


def density(kind, M, eps=EPS):
    if kind == "iso":
        return dirichlet_density(M, eps)
    if kind == "conformal":
        return conformal_density(M)
    raise ValueError(f"unknown distortion {kind!r}; expected 'iso' or 'conformal'")


# -- constraint energies ----------------------------------------------------


def boundary_density(points, domain=Domain()):
    """sigma at 2D points given as (B, 2) array or a taped (B, 2) Var."""
    return domain.squared_signed_distance(points[:, 0], points[:, 1])


def boundary_energy(h, samples, domain=Domain(), layers=None, weight=1.0):
    """Mean squared signed distance of ``h(samples)`` to the domain boundary."""
    out = h.forward(np.asarray(samples, dtype=np.float64), layers)
    return weight * boundary_density(out, domain).mean()


def injectivity_density(det):
    """max(-sign(d) exp(-d), 0), with sign(0) = 0."""
    d = det
    neg = _values(d) < 0
    return where(neg, exp(-d), 0.0)


def injectivity_energy(dets, weight=1e2):
    dens = injectivity_density(dets)
    if isinstance(dens, Var):
        return weight * dens.mean()
    return weight * float(np.mean(dens))


def rotate_inputs(points, rotation=None, domain=Domain()):
    if rotation is None:
        return np.asarray(points, dtype=np.float64)
    return domain.rotate_about_center(rotation, points)


def keypoint_energy(h, P, Q, rotation=None, domain=Domain(), layers=None, weight=1e3):
    """weight * sum_i ||h(R P_i) - Q_i||^2, R applied about the domain centre."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    if P.shape != Q.shape:
        raise ValueError(f"keypoint count mismatch: {len(P)} source vs {len(Q)} target")
    out = h.forward(rotate_inputs(P, rotation, domain), layers)
    diff = out - Q
    sq = (diff * diff).sum()
    return weight * sq


# -- overfitting terms -------------------------------------------------------


def position_error(pred, target):
    """Per-sample ||f(p) - phi(p)||^2."""
    d = pred - target
    return (d * d).sum(axis=1)


def normal_error(pred_normal, target_normal):
    """Per-sample ||n_phi - n_f||^2; ``pred_normal`` is a list of 3 components."""
    acc = 0.0
    for k in range(3):
        d = pred_normal[k] - target_normal[:, k]
        acc = acc + d * d
    return acc


# -- Monte-Carlo integration -------------------------------------------------


@dataclass
class MCEstimate:
    mean: float
    count: int
    values: np.ndarray = field(repr=False)
    flagged: list = field(default_factory=list)

    @property
    def median(self):
        return float(np.median(self.values))


def mc_integrate(density_fn, samples, tolerate_nonfinite=False) -> MCEstimate:
    """Average a per-sample density over ``samples`` (mean density per unit area).

    Non-finite densities raise :class:`NonFiniteDensityError` listing the
    offending sample indices, unless ``tolerate_nonfinite`` is set, in which
    case they are excluded and reported in ``flagged``.
    """
    if len(samples) < 1:
        raise ValueError("need at least one sample")
    vals = np.broadcast_to(np.asarray(density_fn(samples), dtype=np.float64), (len(samples),)).copy()
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        if not tolerate_nonfinite:
            raise NonFiniteDensityError(f"{bad.size} samples have non-finite density", bad.tolist())
        vals = np.delete(vals, bad)
        if vals.size == 0:
            raise NonFiniteDensityError("every sample is non-finite", bad.tolist())
    return MCEstimate(float(vals.mean()), int(vals.size), vals, bad.tolist())
