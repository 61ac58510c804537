"""``neuralmaps`` command line: overfit, parameterize, map, collection, eval.

Every command reads a YAML config (see ``neuralmaps.config``), writes its
outputs to ``output_dir`` and a ``report.json`` that echoes the config.
Wall-clock time goes to ``timing.json`` so reports stay bit-identical across
reruns.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import config as C
from .analytic import AnalyticSurface
from .composition import CollectionHandle, SurfaceMapHandle, evaluate_surface, landmark_rotation, push_mesh_through
from .domain import Domain
from .energies import EnergyWeights
from .errors import (
    CheckpointError,
    ConfigError,
    DegenerateJacobianError,
    DivergenceError,
    EmbeddingError,
    EvaluationError,
    MeshFormatError,
    NeuralMapsError,
    NonFiniteDensityError,
    ProjectionError,
    ShapeMismatchError,
    TopologyError,
)
from .mesh import keypoint_preimage, load_obj, make_mesh, tutte_embed, write_obj
from .mesh import shapes
from .metrics import grid_triangulation
from .neuralmap import Architecture, build, load, save
from .optimize import (
    OptimizationTask,
    WarmRestartSchedule,
    collection_stats,
    evaluation_points,
    evaluation_triangulation,
    optimize_collection,
    optimize_parameterization,
    optimize_surface_map,
    overfit,
    overfit_stats,
    parameterization_stats,
    surface_map_stats,
)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TOPOLOGY = 4
EXIT_FORMAT = 5
EXIT_NUMERICAL = 6

EXPORT_GRID = 64


def exit_code(exc):
    if isinstance(exc, (ConfigError, ShapeMismatchError, ProjectionError)):
        return EXIT_CONFIG
    if isinstance(exc, (TopologyError, EmbeddingError)):
        return EXIT_TOPOLOGY
    if isinstance(exc, (MeshFormatError, CheckpointError)):
        return EXIT_FORMAT
    if isinstance(exc, (DivergenceError, DegenerateJacobianError, NonFiniteDensityError, EvaluationError)):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_OTHER


# -- building blocks from config ---------------------------------------------------


def load_mesh(spec):
    """A mesh from an OBJ path or ``bundled:<name>``."""
    if isinstance(spec, str) and spec.startswith("bundled:"):
        name = spec.split(":", 1)[1]
        if name not in shapes.BUNDLED:
            raise ConfigError(f"unknown bundled mesh {name!r}; choose from {sorted(shapes.BUNDLED)}")
        return make_mesh(*shapes.BUNDLED[name]())
    if not isinstance(spec, str):
        raise ConfigError(f"mesh must be a path or 'bundled:<name>', got {spec!r}")
    return load_obj(spec)


class Surface:
    """A frozen surface map from config, with its mesh embedding when known."""

    def __init__(self, spec, domain):
        if not isinstance(spec, dict):
            raise ConfigError(f"surface spec must be a mapping, got {spec!r}")
        unknown = set(spec) - {"analytic", "checkpoint", "mesh"}
        if unknown:
            raise ConfigError(f"unknown surface keys {sorted(unknown)}")
        self.plmap = None
        if "analytic" in spec:
            if "checkpoint" in spec:
                raise ConfigError("a surface is either analytic or a checkpoint, not both")
            try:
                self.map = AnalyticSurface.from_dict(spec["analytic"], domain)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad analytic surface {spec['analytic']!r}: {exc}") from exc
        elif "checkpoint" in spec:
            self.map = load(spec["checkpoint"], out_dim=3)
        else:
            raise ConfigError("a surface needs 'analytic' or 'checkpoint'")
        if spec.get("mesh") is not None:
            self.plmap = tutte_embed(load_mesh(spec["mesh"]), domain)

    @property
    def triangulation(self):
        if self.plmap is None:
            return None
        return self.plmap.uv, self.plmap.mesh.faces

    def preimage(self, token):
        """Domain point for a keypoint token: vertex id, 3D point or 2D domain point."""
        if isinstance(token, (int, np.integer)):
            if self.plmap is None:
                raise ConfigError("vertex-id keypoints need the surface's 'mesh'")
            try:
                return keypoint_preimage(self.plmap, int(token))
            except IndexError as exc:
                raise ConfigError(str(exc)) from exc
        token = np.asarray(token, dtype=np.float64)
        if token.shape == (2,):
            return token
        if self.plmap is None:
            raise ConfigError("3D keypoints need the surface's 'mesh'")
        return keypoint_preimage(self.plmap, self.plmap.mesh.to_normalized(token))


def _tokens(line, path, lineno):
    parts = line.split()
    try:
        if all(p.lstrip("-").isdigit() for p in parts):
            return [int(p) for p in parts]
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: cannot parse keypoint line {line!r}") from exc


def read_keypoint_lines(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append((_tokens(line, path, lineno), lineno))
    return rows


def read_pair_keypoints(path, source, target):
    """Map keypoints: ``src_id tgt_id``, ``x y z x y z`` or ``u v u v`` per line."""
    P, Q = [], []
    for values, lineno in read_keypoint_lines(path):
        if len(values) == 2 and all(isinstance(v, int) for v in values):
            a, b = values
        elif len(values) == 6:
            a, b = values[:3], values[3:]
        elif len(values) == 4:
            a, b = values[:2], values[2:]
        else:
            raise ConfigError(f"{path}:{lineno}: expected 2 vertex ids, 6 or 4 coordinates")
        P.append(source.preimage(a))
        Q.append(target.preimage(b))
    return np.reshape(P, (-1, 2)), np.reshape(Q, (-1, 2))


def read_surface_keypoints(path, surface):
    """Collection keypoints: one vertex id, 3D point or 2D domain point per line."""
    out = []
    for values, lineno in read_keypoint_lines(path):
        if len(values) == 1 and isinstance(values[0], int):
            out.append(surface.preimage(values[0]))
        elif len(values) in (2, 3):
            out.append(surface.preimage([float(v) for v in values]))
        else:
            raise ConfigError(f"{path}:{lineno}: expected a vertex id, 3 or 2 coordinates")
    return np.reshape(out, (-1, 2))


def architecture(cfg, out_dim):
    a = cfg["arch"]
    try:
        return Architecture(
            depth=int(a["depth"]),
            width=int(a["width"]),
            out_dim=out_dim,
            residual=bool(a["residual"]),
            activation=a["activation"],
            input_skip=bool(a["input_skip"]),
            final_scale=float(a["final_scale"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad architecture: {exc}") from exc


def make_task(cfg, name):
    o, t = cfg["optimizer"], cfg["train"]
    try:
        weights = EnergyWeights(**cfg["weights"])
        schedule = WarmRestartSchedule(float(o["lr"]), int(o["t0"]), float(o["t_mult"]), float(o["eta_min"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = cfg["output_dir"]
    return OptimizationTask(
        weights=weights,
        energy=cfg["energy"],
        batch_size=int(t["batch_size"]),
        boundary_batch=int(t["boundary_batch"]),
        sample_count=int(t["sample_count"]),
        eval_count=int(t["eval_count"]),
        max_steps=int(t["max_steps"]),
        grad_threshold=float(t["grad_threshold"]),
        ema_decay=float(t["ema_decay"]),
        ema_warmup=int(t["ema_warmup"]),
        schedule=schedule,
        momentum=float(o["momentum"]),
        alpha=float(o["alpha"]),
        bias_correction=bool(o["bias_correction"]),
        seed=int(cfg["seed"]),
        divergence_factor=float(t["divergence_factor"]),
        injectivity=bool(t["injectivity"]),
        eval_every=int(t["eval_every"]),
        checkpoint_every=int(t["checkpoint_every"]),
        checkpoint_dir=os.path.join(out, "checkpoints"),
        log_path=os.path.join(out, "run.jsonl"),
        name=name,
    )


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _finish(cfg, command, report, extra, raw_text):
    out = cfg["output_dir"]
    doc = {
        "command": command,
        "config": cfg,
        "config_text": raw_text,
        "termination": report.termination,
        "steps": report.steps,
        "metrics": report.metrics,
        "curves": report.curves,
    }
    doc.update(extra)
    _write_json(os.path.join(out, "report.json"), doc)
    _write_json(os.path.join(out, "timing.json"), {"wall_clock_seconds": report.wall_clock})
    return doc


def _domain(cfg):
    return Domain(cfg["domain"])


def _grid(domain):
    return grid_triangulation(domain, EXPORT_GRID)


# -- commands ------------------------------------------------------------------------


def cmd_overfit(cfg, raw_text=""):
    domain = _domain(cfg)
    out = cfg["output_dir"]
    mesh = load_mesh(cfg["mesh"])
    plmap = tutte_embed(mesh, domain)
    os.makedirs(out, exist_ok=True)
    write_obj(os.path.join(out, "uv.obj"), mesh.to_original(mesh.vertices), mesh.faces, uvs=plmap.uv)
    nmap = build(architecture(cfg, 3), seed=int(cfg["seed"]))
    task = make_task(cfg, "surface")
    report = overfit(plmap, nmap, task)
    save(nmap, os.path.join(out, "surface.nsm"), role="surface", mesh=str(cfg["mesh"]))
    return _finish(cfg, "overfit", report, {"checkpoints": {"surface": "surface.nsm"}}, raw_text)


def _parameterization_setup(cfg):
    domain = _domain(cfg)
    source = Surface(cfg["source"], domain)
    tri = evaluation_triangulation(domain, source.triangulation)
    return domain, source, tri


def cmd_parameterize(cfg, raw_text=""):
    domain, source, tri = _parameterization_setup(cfg)
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    h = build(architecture(cfg, 2), seed=int(cfg["seed"]))
    task = make_task(cfg, "warp")
    report = optimize_parameterization(source.map, h, task, domain=domain, triangulation=tri)
    save(h, os.path.join(out, "warp.nsm"), role="parameterization")
    uv, faces = tri
    if source.plmap is not None:
        verts = source.plmap.mesh.to_original(source.plmap.mesh.vertices)
    else:
        verts = source.map.eval(uv, check=False) if isinstance(source.map, AnalyticSurface) else source.map.forward(uv)
    write_obj(os.path.join(out, "layout.obj"), verts, faces, uvs=h.forward(uv))
    return _finish(cfg, "parameterize", report, {"checkpoints": {"warp": "warp.nsm"}}, raw_text)


def _map_setup(cfg):
    domain = _domain(cfg)
    source = Surface(cfg["source"], domain)
    target = Surface(cfg["target"], domain)
    P = Q = np.zeros((0, 2))
    if cfg["keypoints"]:
        P, Q = read_pair_keypoints(cfg["keypoints"], source, target)
    R = landmark_rotation(P, Q) if cfg["rotation"] == "auto" and len(P) >= 2 else np.eye(2)
    tri = evaluation_triangulation(domain, source.triangulation)
    return domain, source, target, P, Q, R, tri


def _source_points(source, tri):
    uv, faces = tri
    if source.plmap is not None:
        return source.plmap.mesh.to_original(source.plmap.mesh.vertices), uv, faces
    return evaluate_surface(source.map, uv), uv, faces


def cmd_map(cfg, raw_text=""):
    domain, source, target, P, Q, R, tri = _map_setup(cfg)
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    h = build(architecture(cfg, 2), seed=int(cfg["seed"]))
    handle = SurfaceMapHandle(source.map, target.map, h, P, Q, R, domain, bool(cfg["fixed_corners"]))
    report = optimize_surface_map(handle, make_task(cfg, "warp"), triangulation=tri)
    save(h, os.path.join(out, "warp.nsm"), role="surface_map", rotation=R.tolist())
    src_pos, uv, faces = _source_points(source, tri)
    tgt_pos, outside = push_mesh_through(handle, uv, tol=1e-6)
    if target.plmap is not None:
        tgt_pos = target.plmap.mesh.to_original(tgt_pos)
    write_obj(os.path.join(out, "map_source.obj"), src_pos, faces, uvs=uv)
    write_obj(os.path.join(out, "map_target.obj"), tgt_pos, faces, uvs=uv)
    extra = {
        "checkpoints": {"warp": "warp.nsm"},
        "rotation": R.tolist(),
        "keypoint_count": int(len(P)),
        "exported_outside_domain": int(outside.sum()),
    }
    return _finish(cfg, "map", report, extra, raw_text)


def _collection_setup(cfg):
    domain = _domain(cfg)
    surfaces = [Surface(s, domain) for s in cfg["surfaces"]]
    kps = None
    if cfg["keypoints"]:
        kps = [read_surface_keypoints(path, s) for path, s in zip(cfg["keypoints"], surfaces)]
    tri = evaluation_triangulation(domain, None)
    return domain, surfaces, kps, tri


def cmd_collection(cfg, raw_text=""):
    domain, surfaces, kps, tri = _collection_setup(cfg)
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    arch = architecture(cfg, 2)
    warps = [build(arch, seed=int(cfg["seed"]) + i) for i in range(len(surfaces))]
    handle = CollectionHandle([s.map for s in surfaces], warps, kps, None, domain, bool(cfg["fixed_corners"]))
    report = optimize_collection(handle, make_task(cfg, "warp"), triangulation=tri)
    names = {}
    for i, h in enumerate(warps):
        names[f"warp_{i}"] = f"warp_{i}.nsm"
        save(h, os.path.join(out, names[f"warp_{i}"]), role="collection", index=i,
             rotation=handle.rotations[i].tolist())
    uv, faces = _grid(domain)
    images = [handle.composed(i, uv) for i in range(handle.k)]
    pairs = []
    for i in range(handle.k):
        for j in range(handle.k):
            if i != j:
                stem = f"pair_{i}_{j}"
                write_obj(os.path.join(out, stem + "_source.obj"), images[i], faces, uvs=uv)
                write_obj(os.path.join(out, stem + "_target.obj"), images[j], faces, uvs=uv)
                pairs.append(stem)
    extra = {"checkpoints": names, "rotations": [R.tolist() for R in handle.rotations], "exported_pairs": pairs}
    return _finish(cfg, "collection", report, extra, raw_text)


# -- eval -------------------------------------------------------------------------------


def _recompute(doc, base_dir):
    """Statistics of the checkpoints named in a training report, without optimizing."""
    command, cfg = doc["command"], doc["config"]
    out = cfg["output_dir"]
    if not os.path.isabs(out) and not os.path.isdir(out):
        out = base_dir
    ck = {k: os.path.join(out, v) for k, v in doc["checkpoints"].items()}
    task = make_task(cfg, "eval")
    w = task.weights
    if command == "overfit":
        domain = _domain(cfg)
        plmap = tutte_embed(load_mesh(cfg["mesh"]), domain)
        nmap = load(ck["surface"], out_dim=3)
        return overfit_stats(nmap, evaluation_points(task, plmap=plmap))
    if command == "parameterize":
        domain, source, tri = _parameterization_setup(cfg)
        h = load(ck["warp"], out_dim=2)
        interior, _ = evaluation_points(task, domain)
        return parameterization_stats(source.map, h, interior, tri, task.energy, w.eps)
    if command == "map":
        domain, source, target, P, Q, R, tri = _map_setup(cfg)
        h = load(ck["warp"], out_dim=2)
        handle = SurfaceMapHandle(source.map, target.map, h, P, Q, R, domain, bool(cfg["fixed_corners"]))
        interior, boundary = evaluation_points(task, domain)
        return surface_map_stats(handle, interior, boundary, tri, task.energy, w.eps)
    if command == "collection":
        domain, surfaces, kps, tri = _collection_setup(cfg)
        warps = [load(ck[f"warp_{i}"], out_dim=2) for i in range(len(surfaces))]
        rotations = [np.asarray(R) for R in doc["rotations"]]
        handle = CollectionHandle([s.map for s in surfaces], warps, kps, rotations, domain,
                                  bool(cfg["fixed_corners"]))
        interior, boundary = evaluation_points(task, domain)
        return collection_stats(handle, interior, boundary, tri, task.energy, w.eps)
    raise ConfigError(f"report has unknown command {command!r}")


def _table(stats, prefix=""):
    rows = []
    for k in sorted(stats):
        v = stats[k]
        if isinstance(v, dict):
            rows += _table(v, f"{prefix}{k}.")
        elif isinstance(v, list):
            rows.append((prefix + k, ", ".join(f"{x:.6g}" for x in v)))
        else:
            rows.append((prefix + k, f"{v:.6g}"))
    return rows


def cmd_eval(cfg, raw_text=""):
    path = cfg["report"]
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not a JSON report ({exc})") from exc
    stats = _recompute(doc, os.path.dirname(os.path.abspath(path)))
    result = {"report": path, "command": doc["command"], "stats": stats}
    target = cfg["output"] or os.path.join(os.path.dirname(os.path.abspath(path)), "eval.json")
    _write_json(target, result)
    rows = _table(stats)
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k.ljust(width)}  {v}")
    return result


COMMAND_FUNCS = {
    "overfit": cmd_overfit,
    "parameterize": cmd_parameterize,
    "map": cmd_map,
    "collection": cmd_collection,
    "eval": cmd_eval,
}


def run(command, config_path=None, overrides=(), seed=None, config_text=None):
    """Resolve a config and run one command; returns the written report dict."""
    if config_text is None:
        if config_path is None:
            config_text = ""
        else:
            with open(config_path, encoding="utf-8") as fh:
                config_text = fh.read()
    cfg = C.resolve(command, C.load_text(config_text, config_path or "<config>"), overrides, seed)
    return COMMAND_FUNCS[command](cfg, config_text)


def build_parser():
    parser = argparse.ArgumentParser(prog="neuralmaps", description="Neural surface maps.")
    parser.add_argument("command", choices=C.COMMANDS)
    parser.add_argument("--config", required=True, help="YAML config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. train.max_steps=500")
    parser.add_argument("--threads", type=int, default=None, help="BLAS threads; 1 gives bit-identical reruns")
    parser.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                run(args.command, args.config, args.overrides, args.seed)
        else:
            run(args.command, args.config, args.overrides, args.seed)
    except (NeuralMapsError, OSError) as exc:
        code = exit_code(exc)
        print(f"neuralmaps {args.command}: error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
