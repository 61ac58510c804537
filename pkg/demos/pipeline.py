"""End-to-end CLI run at toy scale: overfit, parameterize, map, collection, eval.

    python3 demos/pipeline.py [output_dir]

Budgets are tiny so the whole script finishes in a minute or two; raise
``train.max_steps`` (or drop the overrides) for real runs.
"""

import json
import sys
from pathlib import Path

import yaml

from neuralmaps.cli import main

TRAIN = {"max_steps": 200, "batch_size": 512, "boundary_batch": 512, "sample_count": 20000, "eval_count": 1024}


def write(path, train=None, **entries):
    path.write_text(yaml.safe_dump({"train": {**TRAIN, **(train or {})}, **entries}))
    return str(path)


def run(command, cfg):
    code = main([command, "--config", cfg, "--threads", "1"])
    if code:
        raise SystemExit(f"{command} failed with exit code {code}")


def summary(out, name):
    final = json.loads((out / name / "report.json").read_text())["metrics"]["final"]
    shown = {k: v for k, v in final.items() if not isinstance(v, (dict, list))}
    print(f"{name:>12}: " + ", ".join(f"{k}={v:.4g}" for k, v in shown.items()))


def main_demo(out):
    out.mkdir(parents=True, exist_ok=True)
    run("overfit", write(out / "overfit.yaml", mesh="bundled:hemisphere", output_dir=str(out / "fit"),
                         train={"max_steps": 2000, "grad_threshold": 0.0},
                         arch={"depth": 3, "width": 32, "final_scale": 0.01}, optimizer={"lr": 1e-3, "t0": 2000}))
    surface = {"checkpoint": str(out / "fit" / "surface.nsm"), "mesh": "bundled:hemisphere"}
    small_warp = {"depth": 3, "width": 32}

    run("parameterize", write(out / "param.yaml", source=surface, output_dir=str(out / "param"),
                              arch=small_warp, energy="conformal"))

    # keypoints as domain points: source u v, target u v
    (out / "kp.txt").write_text("# source uv, target uv\n0.3 0.5 0.35 0.5\n")
    run("map", write(out / "map.yaml", source=surface, target={"analytic": {"kind": "saddle"}},
                     keypoints=str(out / "kp.txt"), output_dir=str(out / "map"), arch=small_warp))

    kinds = ("plane", "torus_patch", "saddle")
    run("collection", write(out / "coll.yaml", surfaces=[{"analytic": {"kind": k}} for k in kinds],
                            output_dir=str(out / "coll"), arch=small_warp))

    for name in ("fit", "param", "map", "coll"):
        (out / f"eval_{name}.yaml").write_text(yaml.safe_dump({"report": str(out / name / "report.json")}))
        run("eval", str(out / f"eval_{name}.yaml"))
    for name in ("fit", "param", "map", "coll"):
        summary(out, name)


if __name__ == "__main__":
    main_demo(Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out"))
