import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from neuralmaps import config as C
from neuralmaps.cli import (
    EXIT_CONFIG,
    EXIT_FORMAT,
    EXIT_IO,
    EXIT_NUMERICAL,
    EXIT_TOPOLOGY,
    Surface,
    main,
    read_pair_keypoints,
    read_surface_keypoints,
)
from neuralmaps.domain import Domain
from neuralmaps.errors import ConfigError
from neuralmaps.mesh import read_obj, write_obj
from neuralmaps.neuralmap import load

TINY = {"train": {"max_steps": 15, "batch_size": 128, "boundary_batch": 128, "sample_count": 2000, "eval_count": 256}}
SMALL_ARCH = {"depth": 2, "width": 8}


def write_config(path, **entries):
    data = {**TINY, **entries}
    path.write_text(yaml.safe_dump(data))
    return str(path)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A directory holding one overfitted hemisphere shared by the CLI tests."""
    d = tmp_path_factory.mktemp("cli")
    cfg = write_config(d / "overfit.yaml", mesh="bundled:hemisphere", output_dir=str(d / "fit"),
                       arch={"depth": 2, "width": 16, "final_scale": 0.01})
    assert main(["overfit", "--config", cfg, "--threads", "1"]) == 0
    return d


def test_overfit_outputs(workdir):
    report = json.loads((workdir / "fit" / "report.json").read_text())
    assert report["termination"] in ("grad-threshold", "max-steps")
    assert report["steps"] == 15
    assert set(report["metrics"]["final"]) >= {"position_rmse", "normal_deviation_deg_mean"}
    assert "wall_clock" not in json.dumps(report)
    assert json.loads((workdir / "fit" / "timing.json").read_text())["wall_clock_seconds"] > 0
    V, F, _, uv = read_obj(workdir / "fit" / "uv.obj")
    assert len(V) == 469 and uv.shape == (469, 2)
    assert load(workdir / "fit" / "surface.nsm", out_dim=3).arch.width == 16
    lines = (workdir / "fit" / "run.jsonl").read_text().splitlines()
    assert len(lines) == 15


def surface_spec(workdir):
    return {"checkpoint": str(workdir / "fit" / "surface.nsm"), "mesh": "bundled:hemisphere"}


def test_parameterize_map_collection_and_eval(workdir, capsys):
    cfg = write_config(workdir / "param.yaml", source=surface_spec(workdir), output_dir=str(workdir / "param"),
                       arch=SMALL_ARCH, energy="conformal")
    assert main(["parameterize", "--config", cfg]) == 0
    assert (workdir / "param" / "layout.obj").exists()

    kp = workdir / "kp.txt"
    kp.write_text("# source and target domain points\n0.3 0.3 0.3 0.3\n0.6 0.7 0.6 0.7\n")
    cfg = write_config(workdir / "map.yaml", source=surface_spec(workdir), target={"analytic": {"kind": "saddle"}},
                       keypoints=str(kp), output_dir=str(workdir / "map"), arch=SMALL_ARCH)
    assert main(["map", "--config", cfg]) == 0
    _, F_src, _, _ = read_obj(workdir / "map" / "map_source.obj")
    _, F_tgt, _, _ = read_obj(workdir / "map" / "map_target.obj")
    assert np.array_equal(F_src, F_tgt)

    cfg = write_config(workdir / "coll.yaml", surfaces=[{"analytic": {"kind": k}} for k in ("plane", "hemisphere", "saddle")],
                       output_dir=str(workdir / "coll"), arch=SMALL_ARCH)
    assert main(["collection", "--config", cfg]) == 0
    assert len(list((workdir / "coll").glob("pair_*_source.obj"))) == 6

    for run in ("fit", "param", "map", "coll"):
        e = workdir / f"eval_{run}.yaml"
        e.write_text(yaml.safe_dump({"report": str(workdir / run / "report.json")}))
        capsys.readouterr()
        assert main(["eval", "--config", str(e)]) == 0
        printed = capsys.readouterr().out
        report = json.loads((workdir / run / "report.json").read_text())
        stats = json.loads((workdir / run / "eval.json").read_text())["stats"]
        assert stats == report["metrics"]["final"], run
        assert printed.strip()


def test_missing_file_is_io_error(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", mesh=str(tmp_path / "nope.obj"), output_dir=str(tmp_path / "o"))
    assert main(["overfit", "--config", cfg]) == EXIT_IO
    assert main(["overfit", "--config", str(tmp_path / "missing.yaml")]) == EXIT_IO


def test_tetrahedron_is_topology_error(tmp_path, capsys):
    obj = tmp_path / "tetra.obj"
    write_obj(obj, [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])
    cfg = write_config(tmp_path / "c.yaml", mesh=str(obj), output_dir=str(tmp_path / "o"))
    capsys.readouterr()
    assert main(["overfit", "--config", cfg]) == EXIT_TOPOLOGY
    assert "no boundary loop" in capsys.readouterr().err


def test_format_errors(tmp_path):
    obj = tmp_path / "bad.obj"
    obj.write_text("v 0 0 0\nf 1 2 3\n")
    cfg = write_config(tmp_path / "c.yaml", mesh=str(obj), output_dir=str(tmp_path / "o"))
    assert main(["overfit", "--config", cfg]) == EXIT_FORMAT
    ck = tmp_path / "bad.nsm"
    ck.write_bytes(b"junk")
    cfg = write_config(tmp_path / "p.yaml", source={"checkpoint": str(ck)}, output_dir=str(tmp_path / "o"))
    assert main(["parameterize", "--config", cfg]) == EXIT_FORMAT


@pytest.mark.parametrize(
    "text",
    ["mesh: [unclosed", "- a list", "mesh: bundled:quad\nbogus: 1", "mesh: bundled:quad\nenergy: area",
     "mesh: bundled:quad\ntrain: {max_steps: lots}", "mesh: bundled:nothing", "output_dir: x"],
)
def test_config_errors(tmp_path, text):
    path = tmp_path / "c.yaml"
    path.write_text(text)
    assert main(["overfit", "--config", str(path), "--set", f"output_dir={tmp_path / 'o'}"]) == EXIT_CONFIG


def test_bad_override_and_threads(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", mesh="bundled:quad", output_dir=str(tmp_path / "o"))
    assert main(["overfit", "--config", cfg, "--set", "train.max_steps"]) == EXIT_CONFIG
    assert main(["overfit", "--config", cfg, "--threads", "0"]) == EXIT_CONFIG


def test_divergence_exit_code(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", mesh="bundled:plane", output_dir=str(tmp_path / "o"),
                       optimizer={"lr": 1e3, "bias_correction": False}, arch=SMALL_ARCH)
    assert main(["overfit", "--config", cfg]) == EXIT_NUMERICAL


def test_overrides_and_seed(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", mesh="bundled:quad", output_dir=str(tmp_path / "o"), arch=SMALL_ARCH)
    assert main(["overfit", "--config", cfg, "--set", "train.max_steps=3", "--set", "optimizer.lr=1e-3",
                 "--seed", "7"]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["steps"] == 3 and report["config"]["seed"] == 7
    assert report["config"]["optimizer"]["lr"] == 1e-3


def test_config_resolution():
    cfg = C.resolve("map", {"source": {"analytic": {"kind": "plane"}}, "target": {"analytic": {"kind": "plane"}}},
                    ["weights.boundary=1e4", "train.injectivity=false"])
    assert cfg["weights"]["boundary"] == 1e4 and cfg["train"]["injectivity"] is False
    assert cfg["arch"] == C.WARP_ARCH
    assert C.parse_override("a.b.c=[1, 2]") == {"a": {"b": {"c": [1, 2]}}}
    with pytest.raises(ConfigError):
        C.resolve("map", {"source": {"analytic": {"kind": "plane"}}})
    with pytest.raises(ConfigError):
        C.resolve("collection", {"surfaces": [{"analytic": {"kind": "plane"}}]})
    with pytest.raises(ConfigError):
        C.defaults("train")


def test_keypoint_files(tmp_path, workdir):
    domain = Domain()
    mesh_surface = Surface(surface_spec(workdir), domain)
    analytic = Surface({"analytic": {"kind": "plane"}}, domain)
    f = tmp_path / "k.txt"
    f.write_text("5 7\n0.1 0.2 0.3 0.4\n")
    P, Q = read_pair_keypoints(f, mesh_surface, mesh_surface)
    np.testing.assert_array_equal(P[0], mesh_surface.plmap.uv[5])
    np.testing.assert_array_equal(Q[1], [0.3, 0.4])
    # 3D points are given in the mesh's original units
    v = mesh_surface.plmap.mesh.to_original(mesh_surface.plmap.mesh.vertices[12])
    f.write_text(" ".join(map(repr, v.tolist())) + "\n0.5 0.5\n")
    pts = read_surface_keypoints(f, mesh_surface)
    np.testing.assert_allclose(pts[0], mesh_surface.plmap.uv[12], atol=1e-12)
    with pytest.raises(ConfigError):
        f.write_text("3\n")
        read_surface_keypoints(f, analytic)
    with pytest.raises(ConfigError):
        f.write_text("1 2 3 4 5\n")
        read_pair_keypoints(f, analytic, analytic)


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "neuralmaps.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "--threads" in out.stdout
