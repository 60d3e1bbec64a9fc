import json
import re
import socket
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from osteonav.calibration import PosePair
from osteonav.cli import main, transform_from_json, transform_to_json
from osteonav.fixtures import DEFAULT_TRACKER_CENTERS, fiducial_scene
from osteonav.geometry import RigidTransform, so3_exp
from osteonav.ingest import write_binary_stl

GOLDEN = Path(__file__).parent / "golden"
POSE = RigidTransform.from_rotvec([0.3, -0.2, 0.5], [40.0, -25.0, 300.0])


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


def test_fit_fiducials(tmp_path):
    stl = tmp_path / "lenses.stl"
    stl.write_bytes(write_binary_stl(fiducial_scene(pose=POSE, noise=0.02, rng=np.random.default_rng(1))))
    out = tmp_path / "centers.json"
    assert run("fit-fiducials", stl, "--out", out) == 0
    d = json.loads(out.read_text())
    assert d["schema"] == "osteonav/centers@1"
    err = np.linalg.norm(np.array(d["centers"]) - POSE.apply(DEFAULT_TRACKER_CENTERS), axis=1)
    assert err.max() < 0.15
    assert len(d["fit_rms_mm"]) == 4 and d["sorting_discrepancy_mm"] < 0.5


def test_empty_stl_is_a_domain_error(tmp_path, capsys):
    (tmp_path / "empty.stl").write_bytes(b"")
    assert run("fit-fiducials", tmp_path / "empty.stl") == 1
    assert "error" in capsys.readouterr().err


def test_register_identical_files_is_identity(tmp_path, capsys):
    f = write_json(tmp_path / "c.json", {"centers": DEFAULT_TRACKER_CENTERS.tolist()})
    assert run("register", "--img", f, "--cam", f) == 0
    out, err = capsys.readouterr()
    d = json.loads(out)
    assert d["schema"] == "osteonav/registration@1"
    assert transform_from_json(d["camera_T_img"]).allclose(RigidTransform.identity(), 1e-9)
    assert re.fullmatch(r"residuals: (\d+\.\d\dmm, ){3}\d+\.\d\dmm\n", err)


def test_register_recovers_ground_truth(tmp_path, capsys):
    img = write_json(tmp_path / "img.json", {"centers": DEFAULT_TRACKER_CENTERS.tolist()})
    cam = write_json(tmp_path / "cam.json", {"centers": POSE.apply(DEFAULT_TRACKER_CENTERS).tolist()})
    assert run("register", "--img", img, "--cam", cam) == 0
    d = json.loads(capsys.readouterr().out)
    assert transform_from_json(d["camera_T_img"]).allclose(POSE, 1e-9)


def _pairs(x, n, seed):
    rng = np.random.default_rng(seed)
    y = RigidTransform.from_rotvec([0, 0, 0.6], [70, 0, 60])
    out = []
    for _ in range(n):
        b = RigidTransform(so3_exp(rng.uniform(-0.6, 0.6, 3)), rng.uniform(-300, 300, 3))
        p = PosePair(b.inverse(), x.inverse() @ b @ y)
        out.append({"robot": transform_to_json(p.robot)["pose7"], "tracker": transform_to_json(p.tracker)["matrix"]})
    return {"pairs": out}


def test_calibrate(tmp_path):
    x = RigidTransform.from_rotvec([0.3, -1.2, 0.5], [800, -200, 450])
    pairs = write_json(tmp_path / "pairs.json", _pairs(x, 5, 0))
    test = write_json(tmp_path / "test.json", _pairs(x, 5, 1))
    out = tmp_path / "x.json"
    assert run("calibrate", "--pairs", pairs, "--test", test, "--out", out) == 0
    d = json.loads(out.read_text())
    assert d["schema"] == "osteonav/handeye@1"
    assert transform_from_json(d["base_T_camera"]).allclose(x, 1e-8)
    assert d["max_test_residual_mm"] < 1e-8 and len(d["test_residuals_mm"]) == 10


def test_calibrate_too_few_pairs(tmp_path):
    x = RigidTransform.identity()
    assert run("calibrate", "--pairs", write_json(tmp_path / "p.json", _pairs(x, 2, 0))) == 1


def test_bad_json_is_a_domain_error(tmp_path):
    (tmp_path / "bad.json").write_text("{nope")
    assert run("register", "--img", tmp_path / "bad.json", "--cam", tmp_path / "bad.json") == 1


@pytest.mark.parametrize("argv", [[], ["fly"], ["register", "--img", "a.json"], ["simulate", "--out", "x",
                                                                                 "--seeds", "3..1"]])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_simulate_matches_golden_and_repeats(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("simulate", "--preset", "noiseless", "--duration", "0.2", "--out", out) == 0
    assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()
    assert (a / "report.csv").read_text() == (GOLDEN / "noiseless_0.2s.csv").read_text()
    s = json.loads((a / "summary.json").read_text())
    assert s["schema"] == "osteonav/scenario-summary@1" and s["ticks"] == 101


def test_simulate_scenario_file_and_seed_batch(tmp_path):
    plan = write_json(tmp_path / "plan.json", {
        "points_img": [[0, -20, 0], [5, -10, 0.5], [8, 0, 1], [5, 10, 0.5], [0, 20, 0]],
        "tracker_model": {"centers": DEFAULT_TRACKER_CENTERS.tolist()}})
    cfg = write_json(tmp_path / "scn.json", {"duration": 0.3, "plan": "plan.json",
                                             "phantom": {"kind": "random_walk", "window": [0.0, None]}})
    out = tmp_path / "batch"
    assert run("simulate", "--scenario", cfg, "--seeds", "0..2", "--jobs", "2", "--out", out) == 0
    batch = json.loads((out / "batch.json").read_text())
    assert batch["schema"] == "osteonav/batch@1" and batch["seeds"] == [0, 1, 2]
    csvs = [(out / f"seed_{s}" / "report.csv").read_text() for s in range(3)]
    assert csvs[0].splitlines()[0] == "t,err_planar_mm,err_rot_rad,force_N,axial_mm"
    assert len(set(csvs)) == 3


def test_unknown_preset_is_a_domain_error(tmp_path):
    assert run("simulate", "--preset", "nope", "--out", tmp_path) == 1


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_split_process_mode(tmp_path):
    port = _free_port()
    addr = f"127.0.0.1:{port}"
    cmd = [sys.executable, "-m", "osteonav.cli"]
    # two connection slots: one for the readiness probe, one for the controller
    nav = subprocess.Popen(cmd + ["serve-nav", "--preset", "static", "--duration", "1", "--listen", addr,
                                  "--connections", "2"])
    for _ in range(200):
        try:
            socket.create_connection(("127.0.0.1", port), timeout=0.1).close()
            break
        except OSError:
            time.sleep(0.05)
    ctl = subprocess.run(cmd + ["run-controller", "--preset", "static", "--duration", "1", "--connect", addr,
                                "--out", str(tmp_path)], timeout=30)
    nav.wait(timeout=10)
    assert ctl.returncode == 0 and nav.returncode == 0
    d = json.loads((tmp_path / "controller.json").read_text())
    assert d["schema"] == "osteonav/controller-run@1"
    assert d["poses"] >= 28 and d["out_of_order"] == 0 and d["decode_errors"] == {}
    assert np.isfinite(d["final_planar_mm"])


def test_log_level_from_environment(tmp_path):
    env = {"OSTEONAV_LOG": "info", "PATH": ""}
    r = subprocess.run([sys.executable, "-m", "osteonav.cli", "simulate", "--preset", "noiseless",
                        "--duration", "0.1", "--out", str(tmp_path)], capture_output=True, text=True, env=env)
    assert r.returncode == 0 and "INFO osteonav: drilling error" in r.stderr
