import warnings

import numpy as np
import pytest

from neuralmaps.analytic import AnalyticSurface
from neuralmaps.composition import (
    CollectionHandle,
    SurfaceMapHandle,
    estimate_normal,
    jacobian_of_f,
    jacobian_of_param,
    landmark_rotation,
    push_mesh_through,
    rotation_matrix,
)
from neuralmaps.domain import Domain
from neuralmaps.energies import dirichlet_density
from neuralmaps.errors import DegenerateJacobianError, SingularSourceError
from neuralmaps.mesh import make_mesh, shapes, tutte_embed
from neuralmaps.neuralmap import WARP_ARCH, Architecture, build, linear_map


def pushforward_singular_values(J_src, J_tgt):
    """Oracle: push an orthonormal tangent frame of the source through J_tgt J_src^+."""
    out = []
    for A, B in zip(J_src, J_tgt):
        U, _, _ = np.linalg.svd(A)
        frame = U[:, :2]
        pre = np.linalg.lstsq(A, frame, rcond=None)[0]  # domain directions hitting the frame
        out.append(np.linalg.svd(B @ pre, compute_uv=False))
    return np.array(out)


def test_composed_jacobian_matches_pushforward_oracle(rng):
    n = 2000
    J_src = rng.normal(size=(n, 3, 2))
    for rows in (3, 2):
        J_tgt = rng.normal(size=(n, rows, 2))
        J_eff, M = jacobian_of_f(J_src, J_tgt)
        sv = np.linalg.svd(J_eff, compute_uv=False)
        np.testing.assert_allclose(sv, pushforward_singular_values(J_src, J_tgt), rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(M, np.swapaxes(J_eff, -1, -2) @ J_eff, rtol=1e-12)


def test_planar_closed_forms():
    J_src = np.array([[1.0, 0], [0, 1], [0, 0]])
    J_eff, M = jacobian_of_f(J_src, np.array([[2.0, 0], [0, 3], [0, 0]]))
    np.testing.assert_allclose(sorted(np.linalg.svd(J_eff, compute_uv=False)), [2, 3], rtol=1e-15)
    np.testing.assert_allclose(M, np.diag([4.0, 9.0]), atol=1e-15)

    J_phi = np.array([[2.0, 0], [0, 1], [0, 0]])
    J_eff, M = jacobian_of_f(J_phi, J_phi)
    np.testing.assert_allclose(np.linalg.svd(J_eff, compute_uv=False), [1, 1], rtol=1e-15)
    assert float(dirichlet_density(M)) == pytest.approx(2 + 2 / 1.01, abs=1e-14)


def test_parameterization_closed_forms():
    planar = np.array([[1.0, 0], [0, 1], [0, 0]])
    M = jacobian_of_param(planar, np.eye(2))
    np.testing.assert_allclose(M, np.eye(2), atol=1e-15)
    assert float(dirichlet_density(M)) == pytest.approx(3.9802, abs=1e-4)
    np.testing.assert_allclose(jacobian_of_param(2 * planar, np.eye(2)), 0.25 * np.eye(2), atol=1e-15)


def test_parameterization_metric_matches_mesh_triangles():
    # f maps each 3D triangle affinely onto its UV triangle; compare singular values
    plmap = tutte_embed(make_mesh(*shapes.hemisphere(6)))
    V, F, uv = plmap.mesh.vertices, plmap.mesh.faces, plmap.uv
    e3 = np.stack([V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]]], axis=-1)  # 3x2
    e2 = np.stack([uv[F[:, 1]] - uv[F[:, 0]], uv[F[:, 2]] - uv[F[:, 0]]], axis=-1)  # 2x2
    J_phi = e3 @ np.linalg.inv(e2)
    M = jacobian_of_param(J_phi, np.broadcast_to(np.eye(2), e2.shape))
    # oracle: f in an isometric 2D chart of each triangle
    oracle = []
    for a, b in zip(e3, e2):
        q, r = np.linalg.qr(a)
        oracle.append(np.linalg.svd(b @ np.linalg.inv(r), compute_uv=False) ** 2)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(M), axis=1), np.sort(oracle, axis=1), rtol=1e-9)


def test_singular_source_reports_point():
    J = np.array([[[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]])
    with pytest.raises(SingularSourceError) as info:
        jacobian_of_f(J, J, points=np.array([[0.3, 0.4]]))
    np.testing.assert_array_equal(info.value.point, [0.3, 0.4])


def test_estimate_normal():
    J = np.array([[1.0, 0], [0, 1], [0, 0]])
    np.testing.assert_allclose(estimate_normal(J), [0, 0, 1])
    np.testing.assert_allclose(estimate_normal(J[:, ::-1]), [0, 0, -1])
    hemi = AnalyticSurface("hemisphere")
    apex = np.array([0.5, 0.5])
    np.testing.assert_allclose(estimate_normal(hemi.eval_jacobian(apex)), hemi.eval(apex) / 1.0, atol=1e-9)
    with pytest.raises(DegenerateJacobianError):
        estimate_normal(np.array([[1.0, 2.0], [1.0, 2.0], [0, 0]]))


def test_landmark_rotation_exact_recovery(rng):
    P = rng.random((6, 2))
    np.testing.assert_allclose(landmark_rotation(P, P), np.eye(2), atol=1e-12)
    R = rotation_matrix(np.pi / 2)
    Q = Domain().rotate_about_center(R, P)
    np.testing.assert_allclose(landmark_rotation(P, Q), R, atol=1e-9)


def test_landmark_rotation_matches_angle_sweep(rng):
    P = rng.random((8, 2))
    Q = Domain().rotate_about_center(rotation_matrix(2.1), P) + 0.05 * rng.normal(size=P.shape)
    Pc, Qc = P - P.mean(0), Q - Q.mean(0)
    angles = np.arange(0, 2 * np.pi, 1e-4)
    c, s = np.cos(angles), np.sin(angles)
    rx = c[:, None] * Pc[:, 0] - s[:, None] * Pc[:, 1]
    ry = s[:, None] * Pc[:, 0] + c[:, None] * Pc[:, 1]
    cost = ((rx - Qc[:, 0]) ** 2 + (ry - Qc[:, 1]) ** 2).sum(1)
    best = angles[np.argmin(cost)]
    R = landmark_rotation(P, Q)
    assert np.linalg.det(R) == pytest.approx(1.0)
    assert abs(np.angle(np.exp(1j * (np.arctan2(R[1, 0], R[0, 0]) - best)))) < 1e-4


def test_landmark_rotation_needs_two_pairs():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        R = landmark_rotation([[0.1, 0.2]], [[0.3, 0.4]])
    assert np.array_equal(R, np.eye(2)) and caught


def test_push_mesh_through_self_map():
    plane = AnalyticSurface("saddle")
    handle = SurfaceMapHandle(plane, plane, linear_map(np.eye(2)), fixed_corners=True)
    pts = Domain().grid(7)
    pos, outside = push_mesh_through(handle, pts)
    np.testing.assert_array_equal(pos, plane.eval(pts))
    assert not outside.any()
    P, Q = handle.keypoints()
    assert len(P) == 4 and np.array_equal(P, Q)
    corner, _ = push_mesh_through(handle, [[0.0, 0.0]])
    np.testing.assert_array_equal(corner[0], plane.eval([0.0, 0.0]))


def test_push_mesh_through_flags_points_leaving_domain():
    plane = AnalyticSurface("plane")
    handle = SurfaceMapHandle(plane, plane, linear_map(np.eye(2), offset=[0.5, 0.0]))
    _, outside = push_mesh_through(handle, np.array([[0.1, 0.5], [0.9, 0.5]]))
    assert outside.tolist() == [False, True]


def make_collection(seed=0):
    surfaces = [AnalyticSurface("plane"), AnalyticSurface("hemisphere"), AnalyticSurface("saddle")]
    warps = [build(WARP_ARCH, seed + i) for i in range(3)]
    rng = np.random.default_rng(seed)
    kps = [rng.uniform(0.2, 0.8, size=(3, 2)) for _ in range(3)]
    return CollectionHandle(surfaces, warps, kps, fixed_corners=True)


def test_collection_cycles_close_exactly(rng):
    handle = make_collection()
    pts = rng.random((1000, 2))
    for path in ([0, 1, 2, 0], [2, 1, 0, 2], [1, 0, 1]):
        images = handle.route(pts, path)
        assert np.array_equal(images[0], images[-1])
    direct = handle.pair_positions(0, 2, pts)
    via = handle.route(pts, [0, 1, 2])
    assert np.array_equal(direct[1], via[2])


def test_collection_validation():
    plane = AnalyticSurface("plane")
    w = build(WARP_ARCH, 0)
    with pytest.raises(ValueError):
        CollectionHandle([plane], [w], None)
    with pytest.raises(ValueError):
        CollectionHandle([plane, plane], [w, w], [np.zeros((2, 2)), np.zeros((3, 2))])
    h = CollectionHandle([plane, plane], [w, w], None)
    assert h.k == 2 and np.array_equal(h.rotations[1], np.eye(2))
    with pytest.raises(TypeError):
        push_mesh_through(h, np.zeros((1, 2)))


def test_collection_keypoints_target_reference_surface():
    handle = make_collection()
    P, Q = handle.keypoint_pairs(2)
    np.testing.assert_array_equal(Q[:3], handle.keypoints[0])
    np.testing.assert_array_equal(P[3:], Domain().corners)


def test_neural_target_jacobian_matches_finite_differences(rng):
    from neuralmaps.optimize.trainer import surface_map_density

    src = AnalyticSurface("plane")
    tgt = build(Architecture(depth=3, width=16, out_dim=3), seed=3)
    handle = SurfaceMapHandle(src, tgt, build(WARP_ARCH, 1), rotation=rotation_matrix(0.4))
    p = rng.uniform(0.2, 0.8, size=(20, 2))
    dens, det = surface_map_density(handle, p)
    h = 1e-6
    J = np.stack([(handle.map_points(p + h * e) - handle.map_points(p - h * e)) / (2 * h) for e in np.eye(2)], -1)
    np.testing.assert_allclose(dens, dirichlet_density(np.swapaxes(J, -1, -2) @ J), rtol=1e-6)
    Jw = np.stack([(handle.warped(p + h * e) - handle.warped(p - h * e)) / (2 * h) for e in np.eye(2)], -1)
    np.testing.assert_allclose(det, np.linalg.det(Jw), rtol=1e-6)
