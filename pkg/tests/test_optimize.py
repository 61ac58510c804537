import json

import numpy as np
import pytest

from neuralmaps.analytic import AnalyticSurface
from neuralmaps.composition import CollectionHandle, SurfaceMapHandle
from neuralmaps.errors import DivergenceError
from neuralmaps.mesh import make_mesh, shapes, tutte_embed
from neuralmaps.neuralmap import WARP_ARCH, Architecture, build, linear_map
from neuralmaps.optimize import (
    OptimizationTask,
    RMSPropState,
    WarmRestartSchedule,
    optimize_collection,
    optimize_parameterization,
    optimize_surface_map,
    overfit,
    rmsprop_step,
)
from neuralmaps.optimize.trainer import _run, checksum

SMALL = dict(batch_size=64, boundary_batch=64, sample_count=2000, eval_count=256)


def test_schedule_restarts():
    s = WarmRestartSchedule(base_lr=1e-4, t0=1000, t_mult=2.0, eta_min=1e-6)
    assert s.lr(0) == pytest.approx(1e-4)
    assert s.lr(500) == pytest.approx(1e-6 + 0.5 * (1e-4 - 1e-6))
    assert s.lr(999) < 1.01e-6
    assert s.lr(1000) == pytest.approx(1e-4)  # first restart
    assert s.phase(2999) == (1, 1999, 2000.0)
    assert s.phase(3000) == (2, 0, 4000.0)
    assert s.lr(3000) == pytest.approx(1e-4)


def test_rmsprop_zero_gradient_is_a_fixed_point():
    state = RMSPropState.zeros(3)
    x = np.array([1.0, -2.0, 3.0])
    for _ in range(5):
        x2 = rmsprop_step(state, x, np.zeros(3))
        np.testing.assert_array_equal(x2, x)


def test_rmsprop_first_step_size():
    sched = WarmRestartSchedule(base_lr=0.1, t0=10)
    g = np.array([3.0, -0.5])
    state = RMSPropState.zeros(2)
    np.testing.assert_allclose(rmsprop_step(state, np.zeros(2), g, sched), -0.1 * np.sign(g), rtol=1e-6)
    # without bias correction the first step is 1/sqrt(1 - alpha) = 10x larger
    state = RMSPropState.zeros(2, bias_correction=False)
    np.testing.assert_allclose(rmsprop_step(state, np.zeros(2), g, sched), -1.0 * np.sign(g), rtol=1e-6)


def test_rmsprop_momentum_accumulates():
    sched = WarmRestartSchedule(base_lr=1.0, t0=10**6, eta_min=1.0)
    state = RMSPropState.zeros(1)
    x = np.zeros(1)
    x = rmsprop_step(state, x, np.ones(1), sched)
    x = rmsprop_step(state, x, np.ones(1), sched)
    np.testing.assert_allclose(x, [-(1 + 0.9 + 1)], rtol=1e-7)


def _bowl_task(**kw):
    return OptimizationTask(schedule=WarmRestartSchedule(base_lr=1e-2, t0=10**6, eta_min=1e-2), **kw)


def test_quadratic_bowl_stops_on_gradient_threshold():
    m = linear_map(np.array([[2.0, -1.0], [0.5, 3.0]]), offset=[1.0, -1.0])

    def loss(layers, rng, step):
        w, b = layers[0][0]
        total = (w * w).sum() + (b * b).sum()
        return total, {"w": (w * w).sum(), "b": (b * b).sum()}

    report = _run([m], loss, _bowl_task(max_steps=5000))
    assert report.termination == "grad-threshold"
    assert np.linalg.norm(m.parameters()) < 0.1
    assert report.curves["loss"][-1] < report.curves["loss"][0]
    np.testing.assert_allclose(np.add(report.curves["w"], report.curves["b"]), report.curves["loss"], rtol=1e-12)


def test_divergence_is_reported():
    m = linear_map(np.eye(2))

    def loss(layers, rng, step):
        w, _ = layers[0][0]
        return (w * w).sum() * 10.0**step, {}

    with pytest.raises(DivergenceError) as info:
        _run([m], loss, _bowl_task(max_steps=10))
    assert info.value.report.termination == "divergence"
    assert info.value.report.steps == 4  # 10^4 > 1e3 x initial on the fifth evaluation


def test_task_validation():
    with pytest.raises(ValueError):
        OptimizationTask(energy="area")
    with pytest.raises(ValueError):
        OptimizationTask(batch_size=0)


@pytest.fixture(scope="module")
def plane_plmap():
    return tutte_embed(make_mesh(*shapes.plane_patch(4)))


def _overfit(plmap, seed=0, **kw):
    nmap = build(Architecture(depth=2, width=8, final_scale=1e-2), seed=seed)
    task = OptimizationTask(max_steps=20, grad_threshold=0.0, seed=seed, **SMALL, **kw)
    return nmap, overfit(plmap, nmap, task)


def test_overfit_runs_deterministically(plane_plmap):
    a, ra = _overfit(plane_plmap)
    b, rb = _overfit(plane_plmap)
    np.testing.assert_array_equal(a.parameters(), b.parameters())
    assert ra.curves == rb.curves and ra.metrics == rb.metrics
    c, _ = _overfit(plane_plmap, seed=1)
    assert not np.array_equal(a.parameters(), c.parameters())


def test_overfit_breakdown_and_logging(plane_plmap, tmp_path):
    log = tmp_path / "run.jsonl"
    _, report = _overfit(plane_plmap, log_path=str(log), eval_every=10, checkpoint_every=10,
                         checkpoint_dir=str(tmp_path / "ck"), schedule=WarmRestartSchedule(base_lr=1e-2))
    np.testing.assert_allclose(np.add(report.curves["position"], report.curves["normal"]), report.curves["loss"])
    lines = [json.loads(x) for x in log.read_text().splitlines()]
    assert len(lines) == report.steps == 20
    assert set(lines[0]) >= {"step", "loss", "terms", "grad_norm", "grad_norm_ema", "lr"}
    assert [c["step"] for c in report.metrics["checkpoints"]] == [0, 10, 20]
    assert sorted(p.name for p in (tmp_path / "ck").iterdir()) == ["run_0_step000010.nsm", "run_0_step000020.nsm"]
    assert report.metrics["final"]["position_rmse"] < report.metrics["initial"]["position_rmse"]


def test_parameterization_keeps_surface_frozen():
    phi = build(Architecture(depth=2, width=8), seed=0)
    before = checksum(phi)
    h = build(WARP_ARCH, seed=0)
    report = optimize_parameterization(phi, h, OptimizationTask(max_steps=3, **SMALL))
    assert report.metrics["frozen_unchanged"] and checksum(phi) == before
    assert set(report.metrics["final"]) == {"median_density", "mean_density", "negative_det_fraction", "flip_percentage"}


def test_surface_map_and_collection_smoke():
    hemi, plane = AnalyticSurface("hemisphere"), AnalyticSurface("plane")
    handle = SurfaceMapHandle(hemi, plane, build(WARP_ARCH, 0), fixed_corners=True)
    r = optimize_surface_map(handle, OptimizationTask(max_steps=3, **SMALL))
    assert set(r.curves) >= {"distortion", "injectivity", "boundary", "keypoint"}
    assert r.metrics["frozen_unchanged"]
    coll = CollectionHandle([hemi, plane, AnalyticSurface("saddle")], [build(WARP_ARCH, i) for i in range(3)], None,
                            fixed_corners=True)
    r = optimize_collection(coll, OptimizationTask(max_steps=2, **SMALL))
    assert len(r.metrics["final"]["pair_median_density"]) == 6
    assert len(r.metrics["final"]["flip_percentage"]) == 3
