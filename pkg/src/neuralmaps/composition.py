"""Composition of surface maps through the common domain.

A surface-to-surface map ``f`` is defined implicitly by ``f(phi(p)) =
psi(h(R p))``. Its Jacobian at ``q = phi(p)`` is ``J_p(psi o h o R)`` times
the inverse of ``J_p phi`` on the tangent plane of the source. The source
Jacobian is 3x2, so its inverse is taken as the left pseudoinverse
restricted to an orthonormal tangent frame, giving an ``n x 2`` matrix and a
2x2 pullback metric that the distortion densities consume.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .analytic import AnalyticSurface
from .autodiff import smallmat as sm
from .autodiff.dual import Dual2
from .autodiff.jacobian import forward_dual
from .autodiff.tape import Var
from .domain import Domain
from .errors import DegenerateJacobianError, SingularSourceError
from .neuralmap import NeuralMap

RANK_TOL = 1e-8


def _is_numeric(m):
    return not any(isinstance(x, Var) for row in m for x in row)


def _nested(J):
    if isinstance(J, np.ndarray):
        return sm.from_array(J), True
    return J, False


def jacobian_of_f(J_source, J_target, points=None):
    """Effective Jacobian and pullback metric of the implicitly defined map.

    ``J_source`` is the 3x2 Jacobian of the source surface map, ``J_target``
    the n x 2 Jacobian of the target composed with the warp, both at the same
    domain point. Accepts numpy arrays (..., r, 2) or nested lists of
    per-sample entries. Returns ``(J_eff, M)`` in the same representation.
    """
    src, numeric = _nested(J_source)
    tgt, _ = _nested(J_target)
    sv = sm.smallest_singular_value(src)
    bad = np.flatnonzero(np.atleast_1d(sv) <= RANK_TOL)
    if bad.size:
        where = None if points is None else np.atleast_2d(points)[bad[0]]
        raise SingularSourceError(f"source Jacobian is rank deficient at sample {int(bad[0])}", where)
    frame = sm.orthonormal_frame(src)
    reduce = sm.matmul(sm.pinv_left(src), frame)  # 2x2
    j_eff = sm.matmul(tgt, reduce)
    metric = sm.gram(j_eff)
    if numeric and _is_numeric(j_eff):
        return sm.to_array(j_eff), sm.to_array(metric)
    return j_eff, metric


def jacobian_of_param(J_source, J_warp, points=None):
    """Pullback metric of the flattening ``f(phi(p)) = h(p)``."""
    return jacobian_of_f(J_source, J_warp, points)[1]


def estimate_normal(J):
    """Unit normal from the two columns of a 3x2 Jacobian."""
    m, numeric = _nested(J)
    n = sm.cross3(sm.column(m, 0), sm.column(m, 1))
    if numeric or _is_numeric([n]):
        arr = np.stack(np.broadcast_arrays(*[np.asarray(getattr(x, "value", x)) for x in n]), axis=-1)
        length = np.linalg.norm(arr, axis=-1, keepdims=True)
        if np.any(length <= RANK_TOL):
            raise DegenerateJacobianError("Jacobian columns are parallel; normal undefined")
        return arr / length
    return sm.normalize(n)


def landmark_rotation(P, Q):
    """2D rotation best aligning centred ``P`` onto centred ``Q`` (Procrustes)."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    if P.shape != Q.shape:
        raise ValueError("landmark sets must have equal size")
    if len(P) < 2:
        warnings.warn("fewer than two landmark pairs; using the identity rotation", stacklevel=2)
        return np.eye(2)
    Pc = P - P.mean(axis=0)
    Qc = Q - Q.mean(axis=0)
    U, _, Vt = np.linalg.svd(Pc.T @ Qc)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, d if d != 0 else 1.0])
    return Vt.T @ D @ U.T


def rotation_matrix(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


# -- evaluating composed maps -------------------------------------------------


def warp_dual(warp: NeuralMap, points, rotation=None, domain=Domain(), layers=None):
    """``h(R p)`` as a Dual2 whose tangents are derivatives w.r.t. ``p``."""
    points = np.asarray(points, dtype=np.float64)
    R = np.eye(2) if rotation is None else np.asarray(rotation, dtype=np.float64)
    q = domain.rotate_about_center(R, points)
    du = np.broadcast_to(R[:, 0], q.shape).copy()
    dv = np.broadcast_to(R[:, 1], q.shape).copy()
    return warp.forward(Dual2(q, du, dv), layers)


def surface_through(surface, q: Dual2, layers=None):
    """Push a Dual2 domain point through a surface map.

    Returns ``(image, J)``: image is a list of 3 coordinates, J the nested
    3x2 Jacobian w.r.t. whatever produced the tangents of ``q``. Neural
    surfaces are differentiated in forward mode; analytic surfaces use their
    closed-form Jacobian chained with the tangents of ``q``.
    """
    if isinstance(surface, AnalyticSurface):
        qu, qv = q.value[:, 0], q.value[:, 1]
        pos, jac = surface.components(qu, qv)
        jq = [[q.du[:, 0], q.dv[:, 0]], [q.du[:, 1], q.dv[:, 1]]]
        return pos, sm.matmul(jac, jq)
    out = surface.forward(q, layers)
    n = out.value.shape[-1]
    return [out.value[:, i] for i in range(n)], [[out.du[:, i], out.dv[:, i]] for i in range(n)]


def surface_frame(surface, points):
    """Numeric image (B, 3) and Jacobian (B, 3, 2) of a frozen surface map."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if isinstance(surface, AnalyticSurface):
        return surface.eval(points, check=False), surface.eval_jacobian(points, check=False)
    out = forward_dual(surface, points)
    return out.value, np.stack([out.du, out.dv], axis=-1)


def evaluate_surface(surface, points):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if isinstance(surface, AnalyticSurface):
        return surface.eval(points, check=False)
    return surface.forward(points)


def warp_points(warp, points, rotation=None, domain=Domain()):
    R = np.eye(2) if rotation is None else rotation
    return warp.forward(domain.rotate_about_center(R, np.atleast_2d(points)))


# -- handles -----------------------------------------------------------------


def with_corners(P, Q, domain):
    corners = domain.corners
    P = np.concatenate([np.reshape(P, (-1, 2)), corners])
    Q = np.concatenate([np.reshape(Q, (-1, 2)), corners])
    return P, Q


@dataclass
class SurfaceMapHandle:
    """Frozen source/target surfaces, a trainable warp and the keypoint data."""

    source: object  # NeuralMap (out 3) or AnalyticSurface
    target: object
    warp: NeuralMap
    P: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    Q: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(2))
    domain: Domain = Domain()
    fixed_corners: bool = False

    def keypoints(self):
        """Keypoint pairs fed to the keypoint energy (corner pins appended)."""
        if self.fixed_corners:
            return with_corners(self.P, self.Q, self.domain)
        return np.reshape(self.P, (-1, 2)), np.reshape(self.Q, (-1, 2))

    def warped(self, points):
        return warp_points(self.warp, points, self.rotation, self.domain)

    def map_points(self, points):
        """psi(h(R p)) for domain points p."""
        return evaluate_surface(self.target, self.warped(points))


def push_mesh_through(handle, preimages, tol=1e-6):
    """Target-surface positions of source vertices given by their preimages.

    Returns ``(positions, outside)`` where ``outside`` flags vertices whose
    warped preimage left the domain by more than ``tol``.
    """
    if isinstance(handle, CollectionHandle):
        raise TypeError("use CollectionHandle.pair_positions for collections")
    q = handle.warped(preimages)
    outside = handle.domain.signed_distance(q) > tol
    return evaluate_surface(handle.target, q), outside


@dataclass
class CollectionHandle:
    """k frozen surfaces with one warp each; all maps route through the domain.

    The map from surface i to j sends ``phi_i(h_i(R_i p))`` to
    ``phi_j(h_j(R_j p))``: both ends are evaluated at the same domain point,
    which is why every cycle closes exactly.
    """

    surfaces: list
    warps: list
    keypoints: list  # per surface: (K, 2) preimages, rows correspond
    rotations: list = None
    domain: Domain = Domain()
    fixed_corners: bool = False

    def __post_init__(self):
        k = len(self.surfaces)
        if k < 2 or len(self.warps) != k:
            raise ValueError("a collection needs k >= 2 surfaces and one warp per surface")
        if self.keypoints is None:
            self.keypoints = [np.zeros((0, 2))] * k
        counts = {np.reshape(kp, (-1, 2)).shape[0] for kp in self.keypoints}
        if len(counts) > 1:
            raise ValueError("every surface needs the same number of keypoints")
        if self.rotations is None:
            ref = np.reshape(self.keypoints[0], (-1, 2))
            self.rotations = [
                landmark_rotation(np.reshape(kp, (-1, 2)), ref) if len(ref) >= 2 else np.eye(2)
                for kp in self.keypoints
            ]

    @property
    def k(self):
        return len(self.surfaces)

    def keypoint_targets(self):
        """Common-domain targets: the reference (first) surface's preimages."""
        return np.reshape(self.keypoints[0], (-1, 2))

    def keypoint_pairs(self, i):
        P = np.reshape(self.keypoints[i], (-1, 2))
        Q = self.keypoint_targets()
        if self.fixed_corners:
            return with_corners(P, Q, self.domain)
        return P, Q

    def composed(self, i, points):
        """phi_i(h_i(R_i p))."""
        q = warp_points(self.warps[i], points, self.rotations[i], self.domain)
        return evaluate_surface(self.surfaces[i], q)

    def route(self, points, path):
        """Images of the same domain points on each surface along ``path``."""
        return [self.composed(i, points) for i in path]

    def pair_positions(self, i, j, points):
        """Corresponding points (on S_i, on S_j) for domain points."""
        return self.composed(i, points), self.composed(j, points)
