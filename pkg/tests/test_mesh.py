import numpy as np
import pytest

from neuralmaps.domain import Domain
from neuralmaps.errors import EmbeddingError, MeshFormatError, OutOfDomainError, ProjectionError, TopologyError
from neuralmaps.mesh import (
    evaluate_pl,
    keypoint_preimage,
    load_obj,
    locate,
    make_mesh,
    read_obj,
    sample_domain,
    signed_areas,
    tutte_embed,
    validate_disk,
    write_obj,
)
from neuralmaps.mesh import shapes
from neuralmaps.mesh.plmap import boundary_fractions
from neuralmaps.mesh.trimesh import boundary_loops


def bundled(name):
    return make_mesh(*shapes.BUNDLED[name]())


def torus_with_hole(n=4, m=4):
    V = []
    for i in range(n):
        for j in range(m):
            a, b = 2 * np.pi * i / n, 2 * np.pi * j / m
            V.append([(2 + np.cos(b)) * np.cos(a), (2 + np.cos(b)) * np.sin(a), np.sin(b)])
    F = []
    for i in range(n):
        for j in range(m):
            p, q = i * m + j, ((i + 1) % n) * m + j
            r, s = ((i + 1) % n) * m + (j + 1) % m, i * m + (j + 1) % m
            F += [[p, q, r], [p, r, s]]
    return np.array(V), np.array(F[1:])


TETRA = (np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]]), np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]]))


@pytest.mark.parametrize(
    "mesh, message",
    [
        (TETRA, "no boundary loop"),
        ((np.eye(3).tolist() + (np.eye(3) + 2).tolist(), [[0, 1, 2], [3, 4, 5]]), "connected components"),
        (shapes.grid(2), None),
        ((np.eye(3), [[0, 1, 1]]), "repeated vertex"),
        ((np.eye(3), [[0, 1, 3]]), "out of range"),
        ((np.vstack([np.eye(3), [[5, 5, 5]]]), [[0, 1, 2]]), "unreferenced"),
        ((np.eye(3).tolist() + [[1, 1, 1]], [[0, 1, 2], [0, 1, 3]]), "oriented"),
        ((np.eye(3).tolist() + [[1, 1, 1], [2, 0, 1]], [[0, 1, 2], [1, 0, 3], [0, 1, 4]]), "non-manifold"),
        (torus_with_hole(), "genus"),
    ],
)
def test_topology_validation(mesh, message):
    V, F = np.asarray(mesh[0], dtype=float), np.asarray(mesh[1])
    if message is None:
        assert len(validate_disk(V, F)) == 8
        return
    with pytest.raises(TopologyError, match=message):
        validate_disk(V, F)


def test_annulus_has_two_loops():
    outer = [[np.cos(a), np.sin(a), 0] for a in np.linspace(0, 2 * np.pi, 4, endpoint=False)]
    inner = [[0.5 * np.cos(a), 0.5 * np.sin(a), 0] for a in np.linspace(0, 2 * np.pi, 4, endpoint=False)]
    F = []
    for k in range(4):
        o0, o1, i0, i1 = k, (k + 1) % 4, 4 + k, 4 + (k + 1) % 4
        F += [[o0, o1, i1], [o0, i1, i0]]
    with pytest.raises(TopologyError, match="multiple boundary loops"):
        validate_disk(np.array(outer + inner), np.array(F))


def test_degenerate_face_rejected():
    with pytest.raises(TopologyError, match="degenerate"):
        make_mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_normalization_roundtrip():
    V, F = shapes.saddle(4)
    mesh = make_mesh(V * 7 + 3, F)
    lo, hi = mesh.vertices.min(0), mesh.vertices.max(0)
    assert np.linalg.norm(hi - lo) == pytest.approx(1.0)
    np.testing.assert_allclose(mesh.to_original(mesh.vertices), V * 7 + 3, atol=1e-12)
    np.testing.assert_allclose(mesh.to_normalized(V * 7 + 3), mesh.vertices, atol=1e-12)


def test_boundary_loop_follows_face_orientation():
    loop = boundary_loops(shapes.quad_patch()[1])[0]
    assert loop.tolist() == [0, 1, 2, 3]


def test_single_triangle_arc_length_fractions():
    mesh = bundled("quad")
    tri = make_mesh(*shapes.single_triangle())
    # sides 1, sqrt(2), 1
    total = 2 + np.sqrt(2)
    np.testing.assert_allclose(boundary_fractions(tri.vertices, tri.boundary_loop()), [0, 1 / total, (1 + np.sqrt(2)) / total])
    np.testing.assert_allclose(boundary_fractions(mesh.vertices, mesh.boundary_loop()), [0, 0.25, 0.5, 0.75])


@pytest.mark.parametrize("name", sorted(shapes.BUNDLED))
@pytest.mark.parametrize("kind", ["square", "disk"])
def test_tutte_is_bijective_on_bundled_meshes(name, kind):
    plmap = tutte_embed(bundled(name), kind)
    assert np.all(signed_areas(plmap.uv, plmap.mesh.faces) > 0)
    loop = plmap.mesh.boundary_loop()
    assert np.abs(Domain(kind).signed_distance(plmap.uv[loop])).max() < 1e-9
    # the triangles tile the boundary polygon without overlap
    x, y = plmap.uv[loop].T
    polygon = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert signed_areas(plmap.uv, plmap.mesh.faces).sum() == pytest.approx(polygon, abs=1e-12)


def test_tutte_interior_vertices_are_neighbour_averages():
    plmap = tutte_embed(bundled("hemisphere"))
    mesh = plmap.mesh
    nbrs = [set() for _ in range(mesh.n_vertices)]
    for a, b in mesh.edges():
        nbrs[a].add(b)
        nbrs[b].add(a)
    boundary = set(mesh.boundary_loop().tolist())
    for v in range(mesh.n_vertices):
        if v not in boundary:
            np.testing.assert_allclose(plmap.uv[v], plmap.uv[list(nbrs[v])].mean(0), atol=1e-12)


def test_tutte_of_square_grid_is_affine():
    V, F = shapes.plane_patch()
    plmap = tutte_embed(make_mesh(V, F))
    np.testing.assert_allclose(plmap.uv, (V[:, :2] + 1) / 2, atol=1e-12)


def test_hemisphere_corners_hit_square_corners():
    plmap = tutte_embed(bundled("hemisphere"))
    for c in Domain().corners:
        assert np.linalg.norm(plmap.uv - c, axis=1).min() < 1e-12


def test_collinear_ear_raises():
    V = [[0, 0, 0], [1, -0.1, 0], [2, 0, 0], [2, 3, 0], [0, 3, 0]]
    F = [[0, 1, 2], [0, 2, 3], [0, 3, 4]]
    with pytest.raises(EmbeddingError):
        tutte_embed(make_mesh(V, F))


def test_locate_agrees_with_barycentric_reconstruction(rng):
    plmap = tutte_embed(bundled("hemisphere"))
    p = rng.random((2000, 2))
    face, bary = locate(plmap, p)
    assert np.all(bary > -1e-9)
    np.testing.assert_allclose(bary.sum(1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.einsum("nk,nkj->nj", bary, plmap.uv[plmap.mesh.faces[face]]), p, atol=1e-12)


def test_locate_outside_domain():
    plmap = tutte_embed(bundled("quad"))
    with pytest.raises(OutOfDomainError) as info:
        locate(plmap, [1.5, 0.5])
    assert info.value.nearest_face in (0, 1)
    face, _ = locate(plmap, np.array([[1.5, 0.5], [0.2, 0.1]]), strict=False)
    assert face[0] == -1 and face[1] >= 0


def test_evaluate_pl_hits_vertices():
    plmap = tutte_embed(bundled("saddle"))
    pos, nrm = evaluate_pl(plmap, plmap.uv)
    np.testing.assert_allclose(pos, plmap.mesh.vertices, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(nrm, axis=1), 1.0)


def test_sampling_is_area_weighted():
    # triangle areas 1 and 1/2
    mesh = make_mesh([[0, 0, 0], [2, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])
    s = sample_domain(tutte_embed(mesh), 60000, seed=0)
    assert np.mean(s.face == 0) == pytest.approx(2 / 3, abs=0.01)
    np.testing.assert_allclose(s.bary.mean(0), [1 / 3] * 3, atol=0.01)
    pos, _ = evaluate_pl(tutte_embed(mesh), s.p[:500])
    np.testing.assert_allclose(pos, s.position[:500], atol=1e-12)


def test_sampling_is_seeded():
    plmap = tutte_embed(bundled("saddle"))
    a, b = sample_domain(plmap, 100, seed=4), sample_domain(plmap, 100, seed=4)
    np.testing.assert_array_equal(a.p, b.p)
    assert len(a.subset(np.arange(10))) == 10
    with pytest.raises(ValueError):
        sample_domain(plmap, 0)


def test_keypoint_preimage():
    plmap = tutte_embed(bundled("hemisphere"))
    np.testing.assert_array_equal(keypoint_preimage(plmap, 5), plmap.uv[5])
    f = plmap.mesh.faces[17]
    centroid = plmap.mesh.vertices[f].mean(0)
    np.testing.assert_allclose(keypoint_preimage(plmap, centroid), plmap.uv[f].mean(0), atol=1e-12)
    with pytest.raises(ProjectionError):
        keypoint_preimage(plmap, centroid + 0.1 * plmap.mesh.normals[f[0]])
    with pytest.raises(IndexError):
        keypoint_preimage(plmap, 10**6)


def test_obj_roundtrip(tmp_path):
    V, F = shapes.saddle(4)
    path = tmp_path / "s.obj"
    uv = V[:, :2]
    write_obj(path, V, F, uvs=uv, normals=np.tile([0, 0, 1.0], (len(V), 1)))
    V2, F2, N2, UV2 = read_obj(path)
    np.testing.assert_array_equal(V2, V)
    np.testing.assert_array_equal(F2, F)
    np.testing.assert_array_equal(UV2, uv)
    assert N2.shape == V.shape


def test_obj_polygons_and_negative_indices(tmp_path):
    path = tmp_path / "q.obj"
    path.write_text("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n")
    _, F, N, UV = read_obj(path)
    assert F.tolist() == [[0, 1, 2], [0, 2, 3]]
    assert N is None and UV is None
    mesh = load_obj(path)
    assert mesh.n_faces == 2


@pytest.mark.parametrize("text", ["v 0 0\nf 1 2 3\n", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", "v 0 0 0\n", "f 1 2 3\n", "v a b c\n"])
def test_obj_format_errors(tmp_path, text):
    path = tmp_path / "bad.obj"
    path.write_text(text)
    with pytest.raises(MeshFormatError):
        read_obj(path)
