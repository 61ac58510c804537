"""Piecewise-linear maps between the domain and a mesh.

``tutte_embed`` produces a bijective UV layout; the resulting :class:`PLMap`
answers point-location queries in UV space and evaluates the inverse map
from the domain back onto the surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from ..domain import Domain
from ..errors import EmbeddingError, OutOfDomainError, ProjectionError
from .trimesh import TriMesh, unique_edges

BARY_TOL = 1e-9
PROJECTION_TOL = 1e-3


class GridIndex:
    """Uniform bucket grid over UV space for triangle lookup."""

    def __init__(self, uv, faces, cells_per_axis=None):
        self.uv = uv
        self.faces = faces
        tri = uv[faces]  # (F, 3, 2)
        self.lo = uv.min(axis=0) - 1e-9
        self.hi = uv.max(axis=0) + 1e-9
        n = cells_per_axis or max(1, int(np.ceil(np.sqrt(len(faces)))))
        self.n = n
        self.size = (self.hi - self.lo) / n
        tmin = self._cell(tri.min(axis=1))
        tmax = self._cell(tri.max(axis=1))
        buckets = [[] for _ in range(n * n)]
        for f in range(len(faces)):
            for ix in range(tmin[f, 0], tmax[f, 0] + 1):
                for iy in range(tmin[f, 1], tmax[f, 1] + 1):
                    buckets[ix * n + iy].append(f)
        width = max(len(b) for b in buckets)
        table = np.full((n * n, width), -1, dtype=np.int64)
        for c, b in enumerate(buckets):
            table[c, : len(b)] = b
        self.table = table
        # precomputed affine inverse per triangle for barycentrics
        a = tri[:, 0]
        e = np.stack([tri[:, 1] - a, tri[:, 2] - a], axis=-1)  # (F, 2, 2)
        self.origin = a
        self.inv = np.linalg.inv(e)

    def _cell(self, pts):
        c = np.floor((pts - self.lo) / self.size).astype(np.int64)
        return np.clip(c, 0, self.n - 1)

    def barycentric(self, faces, pts):
        st = np.einsum("...ij,...j->...i", self.inv[faces], pts - self.origin[faces])
        return np.stack([1.0 - st[..., 0] - st[..., 1], st[..., 0], st[..., 1]], axis=-1)

    def query(self, pts):
        """Best candidate face and its barycentrics for each point.

        The best candidate maximizes the smallest barycentric coordinate; the
        point is inside when that value is >= -BARY_TOL.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        c = self._cell(pts)
        cand = self.table[c[:, 0] * self.n + c[:, 1]]  # (B, K)
        safe = np.where(cand < 0, 0, cand)
        bary = self.barycentric(safe, pts[:, None, :])  # (B, K, 3)
        score = np.where(cand < 0, -np.inf, bary.min(axis=-1))
        best = np.argmax(score, axis=1)
        rows = np.arange(len(pts))
        return cand[rows, best], bary[rows, best], score[rows, best]


@dataclass
class PLMap:
    """A mesh with a bijective UV embedding into the domain."""

    mesh: TriMesh
    uv: np.ndarray
    domain: Domain
    index: GridIndex

    @classmethod
    def from_uv(cls, mesh, uv, domain=None):
        uv = np.asarray(uv, dtype=np.float64)
        return cls(mesh, uv, domain or Domain(), GridIndex(uv, mesh.faces))

    def signed_uv_areas(self):
        return signed_areas(self.uv, self.mesh.faces)


def signed_areas(uv, faces):
    a, b, c = (uv[faces[:, k]] for k in range(3))
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def boundary_fractions(vertices, loop):
    """Cumulative arc-length fraction of each loop vertex (first vertex at 0)."""
    pts = vertices[loop]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    return cum / seg.sum()


def tutte_embed(mesh: TriMesh, domain: Domain | str = "square") -> PLMap:
    """Uniform-weight Tutte embedding with an arc-length boundary on the domain.

    The boundary loop starts at its lowest vertex index and runs along the
    face orientation, counter-clockwise in UV. Each interior vertex is the
    average of its neighbours.
    """
    domain = Domain(domain) if isinstance(domain, str) else domain
    loop = mesh.boundary_loop()
    n = mesh.n_vertices
    uv = np.zeros((n, 2))
    uv[loop] = domain.boundary_point(boundary_fractions(mesh.vertices, loop))

    is_boundary = np.zeros(n, dtype=bool)
    is_boundary[loop] = True
    interior = np.flatnonzero(~is_boundary)
    if interior.size:
        e = unique_edges(mesh.faces)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
        deg = np.asarray(adj.sum(axis=1)).ravel()
        lap = (coo_matrix((deg, (np.arange(n), np.arange(n))), shape=(n, n)) - adj).tocsr()
        a_ii = lap[interior][:, interior].tocsc()
        a_ib = lap[interior][:, loop]
        rhs = -(a_ib @ uv[loop])
        with np.errstate(all="raise"):
            try:
                sol = spsolve(a_ii, rhs)
            except (FloatingPointError, RuntimeError) as exc:
                raise EmbeddingError(f"Tutte system is singular: {exc}") from exc
        sol = np.asarray(sol).reshape(-1, 2)
        if not np.all(np.isfinite(sol)):
            raise EmbeddingError("Tutte system is singular")
        uv[interior] = sol

    areas = signed_areas(uv, mesh.faces)
    bad = np.flatnonzero(areas <= 0)
    if bad.size:
        raise EmbeddingError(
            f"{bad.size} UV triangles are not positively oriented (first face {int(bad[0])}); "
            "the boundary likely has three collinear vertices on one face"
        )
    return PLMap.from_uv(mesh, uv, domain)


def locate(plmap: PLMap, p, strict=True):
    """Containing face and barycentrics for one point (2,) or a batch (B, 2).

    With ``strict`` a point outside every triangle raises
    :class:`OutOfDomainError` naming the nearest triangle; otherwise its face
    is reported as -1.
    """
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    face, bary, score = plmap.index.query(pts)
    outside = score < -BARY_TOL
    if outside.any():
        if strict:
            q = np.atleast_2d(pts)[np.flatnonzero(outside)[0]]
            centroids = plmap.uv[plmap.mesh.faces].mean(axis=1)
            near = int(np.argmin(np.linalg.norm(centroids - q, axis=1)))
            raise OutOfDomainError(f"point {q.tolist()} lies outside the UV image (nearest face {near})", near)
        face = np.where(outside, -1, face)
    if single:
        return int(face[0]), bary[0]
    return face, bary


def interpolate(plmap: PLMap, face, bary):
    """Surface position and renormalized normal at given barycentrics."""
    tri = plmap.mesh.faces[face]
    pos = np.einsum("...k,...kj->...j", bary, plmap.mesh.vertices[tri])
    nrm = np.einsum("...k,...kj->...j", bary, plmap.mesh.normals[tri])
    nrm = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
    return pos, nrm


def evaluate_pl(plmap: PLMap, p):
    """The ground-truth map f: domain -> surface, with interpolated normals."""
    face, bary = locate(plmap, p)
    return interpolate(plmap, face, bary)


@dataclass
class DomainSamples:
    """Struct-of-arrays batch of domain samples with their surface data."""

    p: np.ndarray  # (N, 2)
    position: np.ndarray  # (N, 3)
    normal: np.ndarray  # (N, 3)
    face: np.ndarray  # (N,)
    bary: np.ndarray  # (N, 3)

    def __len__(self):
        return len(self.p)

    def subset(self, idx):
        return DomainSamples(self.p[idx], self.position[idx], self.normal[idx], self.face[idx], self.bary[idx])


DEFAULT_SAMPLE_COUNT = 500_000


def sample_domain(plmap: PLMap, count: int = DEFAULT_SAMPLE_COUNT, seed=None) -> DomainSamples:
    """Samples uniform over surface area, carried to the domain through the UVs."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    areas = plmap.mesh.face_areas()
    face = rng.choice(len(areas), size=count, p=areas / areas.sum())
    r1 = rng.uniform(size=count)
    r2 = rng.uniform(size=count)
    s = np.sqrt(r1)
    bary = np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=-1)
    p = np.einsum("nk,nkj->nj", bary, plmap.uv[plmap.mesh.faces[face]])
    pos, nrm = interpolate(plmap, face, bary)
    return DomainSamples(p, pos, nrm, face, bary)


def closest_point_on_triangles(q, a, b, c):
    """Closest points to ``q`` on each triangle (a, b, c are (F, 3)).

    Returns the points and their barycentric coordinates. Follows the
    Voronoi-region case analysis for point-triangle distance.
    """
    ab, ac, ap = b - a, c - a, q - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = q - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = q - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    n = len(a)
    bary = np.zeros((n, 3))
    done = np.zeros(n, dtype=bool)

    def put(mask, w):
        nonlocal done
        m = mask & ~done
        bary[m] = w[m] if np.ndim(w) == 2 else w
        done |= m

    with np.errstate(divide="ignore", invalid="ignore"):
        put((d1 <= 0) & (d2 <= 0), np.array([1.0, 0.0, 0.0]))
        put((d3 >= 0) & (d4 <= d3), np.array([0.0, 1.0, 0.0]))
        put((d6 >= 0) & (d5 <= d6), np.array([0.0, 0.0, 1.0]))
        v = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), np.stack([1 - v, v, np.zeros(n)], axis=1))
        w = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), np.stack([1 - w, np.zeros(n), w], axis=1))
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), np.stack([np.zeros(n), 1 - w, w], axis=1))
        denom = va + vb + vc
        v, w = vb / denom, vc / denom
        put(np.ones(n, dtype=bool), np.stack([1 - v - w, v, w], axis=1))
    pts = bary[:, :1] * a + bary[:, 1:2] * b + bary[:, 2:] * c
    return pts, bary


def keypoint_preimage(plmap: PLMap, keypoint, tol=PROJECTION_TOL):
    """Domain preimage of a keypoint given as a vertex index or a 3D point.

    3D points are in the mesh's normalized units and are projected onto the
    closest surface point; farther than ``tol`` raises :class:`ProjectionError`.
    """
    if isinstance(keypoint, (int, np.integer)):
        if not 0 <= keypoint < plmap.mesh.n_vertices:
            raise IndexError(f"vertex {keypoint} out of range")
        return plmap.uv[keypoint].copy()
    q = np.asarray(keypoint, dtype=np.float64)
    tri = plmap.mesh.vertices[plmap.mesh.faces]
    pts, bary = closest_point_on_triangles(q, tri[:, 0], tri[:, 1], tri[:, 2])
    dist = np.linalg.norm(pts - q, axis=1)
    f = int(np.argmin(dist))
    if dist[f] > tol:
        raise ProjectionError(f"point {q.tolist()} is {dist[f]:.3g} from the surface (tolerance {tol})")
    return bary[f] @ plmap.uv[plmap.mesh.faces[f]]
