"""Training loops: overfitting, parameterization, surface maps and collections."""

from __future__ import annotations

import hashlib
import json
import os
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import energies as E
from ..analytic import AnalyticSurface
from ..autodiff import smallmat as sm
from ..autodiff.jacobian import forward_dual, grad_norm, gradient
from ..autodiff.tape import Tape
from ..composition import (
    CollectionHandle,
    SurfaceMapHandle,
    jacobian_of_f,
    jacobian_of_param,
    surface_frame,
    surface_through,
    warp_dual,
    warp_points,
)
from ..domain import Domain
from ..errors import DivergenceError
from ..metrics import angle_degrees, flip_percentage, grid_triangulation
from ..mesh.plmap import PLMap, sample_domain
from ..neuralmap import NeuralMap, save
from .rmsprop import RMSPropState, WarmRestartSchedule, rmsprop_step

TERMINATIONS = ("grad-threshold", "max-steps", "divergence")


@dataclass
class OptimizationTask:
    weights: E.EnergyWeights = field(default_factory=E.EnergyWeights)
    energy: str = "iso"
    batch_size: int = 4096
    boundary_batch: int = 4096
    sample_count: int = 500_000
    eval_count: int = 4096
    max_steps: int = 10_000
    grad_threshold: float = 0.1
    ema_decay: float = 0.99
    ema_warmup: int = 100  # steps before the stopping rule is consulted
    schedule: WarmRestartSchedule = field(default_factory=WarmRestartSchedule)
    momentum: float = 0.9
    alpha: float = 0.99
    bias_correction: bool = True
    seed: int = 0
    divergence_factor: float = 1e3
    injectivity: bool = True  # add G to the free-boundary parameterization
    eval_every: int = 0
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    log_path: str | None = None
    name: str = "run"

    def __post_init__(self):
        if self.energy not in E.DENSITIES:
            raise ValueError(f"energy must be one of {sorted(E.DENSITIES)}")
        if self.batch_size < 1 or self.max_steps < 0 or self.sample_count < 1:
            raise ValueError("batch_size, sample_count must be >= 1 and max_steps >= 0")


@dataclass
class TrainerState:
    step: int = 0
    running_loss: float = float("nan")
    breakdown: dict = field(default_factory=dict)
    phase: int = 0
    optimizer: RMSPropState | None = None
    grad_norm_ema: float | None = None


@dataclass
class RunReport:
    termination: str
    steps: int
    curves: dict
    metrics: dict
    wall_clock: float = 0.0

    def to_dict(self, timing=True):
        d = {"termination": self.termination, "steps": self.steps, "metrics": self.metrics, "curves": self.curves}
        if timing:
            d["wall_clock"] = self.wall_clock
        return d


def checksum(nmap):
    if isinstance(nmap, AnalyticSurface):
        return "analytic:" + json.dumps(nmap.to_dict(), sort_keys=True)
    return hashlib.sha256(nmap.parameters().tobytes()).hexdigest()


def _eval_rng(seed):
    return np.random.default_rng([seed, 7919])


def evaluation_points(task, domain=Domain(), plmap=None):
    """Fixed held-out evaluation samples for a task.

    Returns DomainSamples for overfitting (``plmap`` given), otherwise
    ``(interior, boundary)`` point arrays. Independent of training draws.
    """
    if plmap is not None:
        return sample_domain(plmap, task.eval_count, seed=_eval_rng(task.seed))
    interior = domain.sample_interior(task.eval_count, seed=_eval_rng(task.seed))
    boundary = domain.sample_boundary(task.boundary_batch, seed=_eval_rng(task.seed))
    return interior, boundary


def _run(trainable, loss_fn, task, evaluate=None):
    """Shared optimization loop.

    ``loss_fn(layers, rng, step)`` returns ``(total Var, {term: Var})`` where
    the total is the sum of the terms. ``evaluate()`` returns a dict of
    held-out statistics; it runs before, periodically during, and after
    training.
    """
    sizes = [m.arch.parameter_count() for m in trainable]
    flat = np.concatenate([m.parameters() for m in trainable])
    state = TrainerState(optimizer=RMSPropState.zeros(flat.size, task.alpha, task.momentum, bias_correction=task.bias_correction))
    rng = np.random.default_rng(task.seed)
    curves = defaultdict(list)
    checkpoints = []
    initial_loss = None
    termination = "max-steps"
    log = None
    if task.log_path:
        os.makedirs(os.path.dirname(os.path.abspath(task.log_path)), exist_ok=True)
        log = open(task.log_path, "w", encoding="utf-8")
    initial_stats = evaluate() if evaluate else {}
    if evaluate and task.eval_every:
        checkpoints.append({"step": 0, **initial_stats})
    start = time.perf_counter()
    try:
        for step in range(task.max_steps):
            tape = Tape()
            layers = [m.bind(tape) for m in trainable]
            total, parts = loss_fn(layers, rng, step)
            loss = float(total.value)
            if not np.isfinite(loss) or (
                initial_loss is not None and initial_loss > 0 and loss > task.divergence_factor * initial_loss
            ):
                termination = "divergence"
                break
            if initial_loss is None:
                initial_loss = loss
            g = gradient(total, [p for pair in layers for p in pair])
            gn = grad_norm(g)
            if not np.isfinite(gn):
                termination = "divergence"
                break
            ema = gn if state.grad_norm_ema is None else task.ema_decay * state.grad_norm_ema + (1 - task.ema_decay) * gn
            state.grad_norm_ema = ema
            state.running_loss = loss
            state.breakdown = {k: float(v.value) for k, v in parts.items()}
            state.phase = task.schedule.phase(step)[0]
            state.step = step
            lr = task.schedule.lr(step)
            curves["loss"].append(loss)
            curves["grad_norm"].append(gn)
            for k, v in state.breakdown.items():
                curves[k].append(v)
            if log:
                log.write(json.dumps({"step": step, "loss": loss, "terms": state.breakdown, "grad_norm": gn,
                                      "grad_norm_ema": ema, "lr": lr}) + "\n")
            if step + 1 >= task.ema_warmup and ema < task.grad_threshold:
                termination = "grad-threshold"
                break
            flat = rmsprop_step(state.optimizer, flat, g, task.schedule)
            k = 0
            for m, n in zip(trainable, sizes):
                m.set_parameters(flat[k : k + n])
                k += n
            done = step + 1
            if evaluate and task.eval_every and done % task.eval_every == 0:
                checkpoints.append({"step": done, **evaluate()})
            if task.checkpoint_every and task.checkpoint_dir and done % task.checkpoint_every == 0:
                os.makedirs(task.checkpoint_dir, exist_ok=True)
                for i, m in enumerate(trainable):
                    save(m, os.path.join(task.checkpoint_dir, f"{task.name}_{i}_step{done:06d}.nsm"), step=done)
    finally:
        if log:
            log.close()
    wall = time.perf_counter() - start
    steps = len(curves["loss"])
    final_stats = evaluate() if evaluate else {}
    metrics = {"initial": initial_stats, "final": final_stats}
    if checkpoints:
        metrics["checkpoints"] = checkpoints
    report = RunReport(termination, steps, dict(curves), metrics, wall)
    if termination == "divergence":
        raise DivergenceError(f"{task.name}: loss diverged after {steps} steps", report)
    return report


# -- overfitting ----------------------------------------------------------------


def overfit_terms(nmap, samples, layers=None, weights=E.EnergyWeights()):
    """Position and (weighted) normal terms of the overfitting loss on a batch."""
    out = forward_dual(nmap, samples.p, layers)
    pos = E.position_error(out.value, samples.position).mean()
    du, dv = out.du, out.dv
    normal = sm.normalize(sm.cross3([du[:, i] for i in range(3)], [dv[:, i] for i in range(3)]))
    nrm = E.normal_error(normal, samples.normal).mean()
    return pos, weights.normal * nrm


def overfit_stats(nmap, samples):
    out = forward_dual(nmap, samples.p)
    n = np.cross(out.du, out.dv)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    dev = angle_degrees(n, samples.normal)
    err = np.sum((out.value - samples.position) ** 2, axis=1)
    return {
        "position_rmse": float(np.sqrt(err.mean())),
        "normal_deviation_deg_mean": float(dev.mean()),
        "normal_deviation_deg_median": float(np.median(dev)),
        "normal_loss": float(np.mean(np.sum((n - samples.normal) ** 2, axis=1))),
    }


def overfit(plmap: PLMap, nmap: NeuralMap, task: OptimizationTask, pool=None) -> RunReport:
    """Fit ``nmap`` to the piecewise-linear map of ``plmap`` (positions and normals)."""
    if nmap.out_dim != 3:
        raise ValueError("overfitting needs a map into R^3")
    pool = pool if pool is not None else sample_domain(plmap, task.sample_count, seed=task.seed)
    held_out = evaluation_points(task, plmap=plmap)

    def loss_fn(layers, rng, step):
        batch = pool.subset(rng.integers(0, len(pool), size=min(task.batch_size, len(pool))))
        pos, nrm = overfit_terms(nmap, batch, layers[0], task.weights)
        return pos + nrm, {"position": pos, "normal": nrm}

    return _run([nmap], loss_fn, task, lambda: overfit_stats(nmap, held_out))


# -- parameterization -----------------------------------------------------------


def _warp_jacobian(q):
    return [[q.du[:, 0], q.dv[:, 0]], [q.du[:, 1], q.dv[:, 1]]]


def parameterization_density(phi, h, points, kind="iso", eps=E.EPS, layers=None):
    """Per-sample distortion of the flattening ``f(phi(p)) = h(p)`` and det(J_h)."""
    _, J_phi = surface_frame(phi, points)
    q = warp_dual(h, points, layers=layers)
    jh = _warp_jacobian(q)
    M = jacobian_of_param(sm.from_array(J_phi), jh, points)
    return E.density(kind, M, eps), sm.det2(jh)


def evaluation_triangulation(domain=Domain(), mesh_uv=None):
    """``(uv, faces)`` used for flip counting: the mesh UV layout or a 64x64 grid."""
    if mesh_uv is not None:
        return mesh_uv
    return grid_triangulation(domain, 64)


def parameterization_stats(phi, h, points, triangulation, kind="iso", eps=E.EPS):
    dens, det = parameterization_density(phi, h, points, kind, eps)
    tri_uv, tri_faces = triangulation
    return {
        "median_density": float(np.median(dens)),
        "mean_density": float(np.mean(dens)),
        "negative_det_fraction": float(np.mean(det <= 0)),
        "flip_percentage": flip_percentage(h.forward(tri_uv), tri_faces, tri_uv),
    }


def optimize_parameterization(phi, h: NeuralMap, task: OptimizationTask, points=None, domain=Domain(),
                              triangulation=None) -> RunReport:
    """Minimize the chosen distortion of ``phi o h`` over ``h`` (free boundary).

    ``points`` is the training pool of domain samples (default uniform);
    ``triangulation`` is ``(uv, faces)`` used for flip counting.
    """
    if h.out_dim != 2:
        raise ValueError("the parameterization warp must map into R^2")
    pool = points if points is not None else domain.sample_interior(task.sample_count, seed=task.seed)
    held_out, _ = evaluation_points(task, domain)
    tri = evaluation_triangulation(domain, triangulation)
    phi_sum = checksum(phi)
    w = task.weights

    def loss_fn(layers, rng, step):
        p = pool[rng.integers(0, len(pool), size=min(task.batch_size, len(pool)))]
        dens, det = parameterization_density(phi, h, p, task.energy, w.eps, layers[0])
        terms = {"distortion": dens.mean()}
        if task.injectivity:
            terms["injectivity"] = E.injectivity_energy(det, w.injectivity)
        return _sum(terms), terms

    def evaluate():
        return parameterization_stats(phi, h, held_out, tri, task.energy, w.eps)

    report = _run([h], loss_fn, task, evaluate)
    report.metrics["energy"] = task.energy
    report.metrics["frozen_unchanged"] = checksum(phi) == phi_sum
    return report


# -- surface-to-surface maps -----------------------------------------------------


def _sum(terms):
    total = None
    for v in terms.values():
        total = v if total is None else total + v
    return total


def surface_map_density(handle: SurfaceMapHandle, points, kind="iso", eps=E.EPS, layers=None):
    """Per-sample distortion of the induced map and det of the warp Jacobian."""
    _, J_src = surface_frame(handle.source, points)
    q = warp_dual(handle.warp, points, handle.rotation, handle.domain, layers)
    _, J_tgt = surface_through(handle.target, q)
    _, M = jacobian_of_f(sm.from_array(J_src), J_tgt, points)
    return E.density(kind, M, eps), sm.det2(_warp_jacobian(q))


def surface_map_stats(handle, points, boundary, triangulation, kind, eps):
    dens, det = surface_map_density(handle, points, kind, eps)
    P, Q = handle.keypoints()
    stats = {
        "median_density": float(np.median(dens)),
        "mean_density": float(np.mean(dens)),
        "negative_det_fraction": float(np.mean(det <= 0)),
    }
    if len(P):
        res = np.linalg.norm(warp_points(handle.warp, P, handle.rotation, handle.domain) - Q, axis=1)
        stats["keypoint_residual"] = float(res.max())
    bq = warp_points(handle.warp, boundary, handle.rotation, handle.domain)
    sd = handle.domain.signed_distance(bq)
    stats["boundary_residual"] = float(np.sqrt(np.mean(sd**2)))
    stats["boundary_residual_max"] = float(np.abs(sd).max())
    tri_uv, tri_faces = triangulation
    stats["flip_percentage"] = flip_percentage(
        warp_points(handle.warp, tri_uv, handle.rotation, handle.domain), tri_faces, tri_uv
    )
    return stats


def _constraint_terms(warp, layers, rotation, domain, P, Q, boundary, w):
    terms = {}
    bq = domain.rotate_about_center(rotation, boundary)
    terms["boundary"] = E.boundary_energy(warp, bq, domain, layers, weight=w.boundary)
    if len(P):
        terms["keypoint"] = E.keypoint_energy(warp, P, Q, rotation, domain, layers, weight=w.keypoint)
    return terms


def optimize_surface_map(handle: SurfaceMapHandle, task: OptimizationTask, points=None,
                         triangulation=None) -> RunReport:
    """Minimize D(f) + C(h) + B(h) + G(h) over the warp of ``handle``."""
    domain = handle.domain
    pool = points if points is not None else domain.sample_interior(task.sample_count, seed=task.seed)
    held_out, eval_boundary = evaluation_points(task, domain)
    tri = evaluation_triangulation(domain, triangulation)
    sums = (checksum(handle.source), checksum(handle.target))
    P, Q = handle.keypoints()
    w = task.weights

    def loss_fn(layers, rng, step):
        p = pool[rng.integers(0, len(pool), size=min(task.batch_size, len(pool)))]
        dens, det = surface_map_density(handle, p, task.energy, w.eps, layers[0])
        boundary = domain.sample_boundary(task.boundary_batch, seed=[task.seed, step])
        terms = {"distortion": dens.mean(), "injectivity": E.injectivity_energy(det, w.injectivity)}
        terms.update(_constraint_terms(handle.warp, layers[0], handle.rotation, domain, P, Q, boundary, w))
        return _sum(terms), terms

    def evaluate():
        return surface_map_stats(handle, held_out, eval_boundary, tri, task.energy, w.eps)

    report = _run([handle.warp], loss_fn, task, evaluate)
    report.metrics["energy"] = task.energy
    report.metrics["frozen_unchanged"] = (checksum(handle.source), checksum(handle.target)) == sums
    return report


# -- collections ------------------------------------------------------------------


def collection_densities(handle: CollectionHandle, points, kind="iso", eps=E.EPS, layers=None):
    """Per-pair densities {(i, j): values} and per-warp determinants."""
    layers = layers or [None] * handle.k
    jacs, dets = [], []
    for i in range(handle.k):
        q = warp_dual(handle.warps[i], points, handle.rotations[i], handle.domain, layers[i])
        _, J = surface_through(handle.surfaces[i], q)
        jacs.append(J)
        dets.append(sm.det2(_warp_jacobian(q)))
    dens = {}
    for i in range(handle.k):
        for j in range(handle.k):
            if i != j:
                _, M = jacobian_of_f(jacs[i], jacs[j], points)
                dens[(i, j)] = E.density(kind, M, eps)
    return dens, dets


def collection_stats(handle, points, boundary, triangulation, kind, eps):
    dens, dets = collection_densities(handle, points, kind, eps)
    medians = {f"{i}->{j}": float(np.median(np.asarray(v))) for (i, j), v in dens.items()}
    tri_uv, tri_faces = triangulation
    stats = {
        "pair_median_density": medians,
        "total_median_density": float(sum(medians.values())),
        "flip_percentage": [
            flip_percentage(warp_points(h, tri_uv, R, handle.domain), tri_faces, tri_uv)
            for h, R in zip(handle.warps, handle.rotations)
        ],
    }
    res, bres = [], []
    for i in range(handle.k):
        P, Q = handle.keypoint_pairs(i)
        if len(P):
            res.append(float(np.linalg.norm(warp_points(handle.warps[i], P, handle.rotations[i], handle.domain) - Q,
                                            axis=1).max()))
        sd = handle.domain.signed_distance(warp_points(handle.warps[i], boundary, handle.rotations[i], handle.domain))
        bres.append(float(np.sqrt(np.mean(sd**2))))
    stats["keypoint_residual"] = res
    stats["boundary_residual"] = bres
    return stats


def optimize_collection(handle: CollectionHandle, task: OptimizationTask, points=None,
                        triangulation=None) -> RunReport:
    """Minimize the distortion of all ordered pairs plus per-warp B, G, C."""
    domain = handle.domain
    pool = points if points is not None else domain.sample_interior(task.sample_count, seed=task.seed)
    held_out, eval_boundary = evaluation_points(task, domain)
    tri = evaluation_triangulation(domain, triangulation)
    sums = [checksum(s) for s in handle.surfaces]
    w = task.weights
    pairs = [handle.keypoint_pairs(i) for i in range(handle.k)]

    def loss_fn(layers, rng, step):
        p = pool[rng.integers(0, len(pool), size=min(task.batch_size, len(pool)))]
        dens, dets = collection_densities(handle, p, task.energy, w.eps, layers)
        terms = {"distortion": _sum({k: v.mean() for k, v in dens.items()})}
        boundary = domain.sample_boundary(task.boundary_batch, seed=[task.seed, step])
        for i in range(handle.k):
            terms[f"injectivity_{i}"] = E.injectivity_energy(dets[i], w.injectivity)
            P, Q = pairs[i]
            for name, v in _constraint_terms(handle.warps[i], layers[i], handle.rotations[i], domain, P, Q,
                                             boundary, w).items():
                terms[f"{name}_{i}"] = v
        return _sum(terms), terms

    def evaluate():
        return collection_stats(handle, held_out, eval_boundary, tri, task.energy, w.eps)

    report = _run(list(handle.warps), loss_fn, task, evaluate)
    report.metrics["energy"] = task.energy
    report.metrics["frozen_unchanged"] = [checksum(s) for s in handle.surfaces] == sums
    return report


def task_dict(task: OptimizationTask):
    d = asdict(task)
    d["weights"] = asdict(task.weights)
    d["schedule"] = asdict(task.schedule)
    return d
