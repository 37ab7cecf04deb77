import subprocess
import sys

import numpy as np
import pytest

from lidarmap.cli import main
from lidarmap.metrics import parse_report
from lidarmap.octree import OccupancyOctree
from lidarmap.pointcloud import read_pointcloud

SCENE = """\
# a small room with one crate
box 0 0 1.5 6 5 3
box 1.0 1.0 0.5 0.6 0.8 1.0
"""


def data_lines(path):
    return [l for l in path.read_text().splitlines() if l.strip() and not l.startswith("#")]


@pytest.fixture
def scene(tmp_path):
    p = tmp_path / "room.scene"
    p.write_text(SCENE)
    return p


def simulate(scene, out, *extra):
    return main(["simulate", "--scene", str(scene), "-o", str(out), "--motor-step-deg", "45", "--seed", "3", *extra])


def test_simulate_line_count_and_determinism(scene, tmp_path):
    assert simulate(scene, tmp_path / "a") == 0
    assert simulate(scene, tmp_path / "b") == 0
    log_a = tmp_path / "a" / "scan_00.log"
    # 2 Hz sweep-like sensor: 500 samples per revolution, 8 revolutions per full motor turn
    assert len(data_lines(log_a)) == 500 * 8
    assert log_a.read_bytes() == (tmp_path / "b" / "scan_00.log").read_bytes()
    assert simulate(scene, tmp_path / "c", "--revolutions", "3") == 0
    assert len(data_lines(tmp_path / "c" / "scan_00.log")) == 1500


def test_simulate_missing_scene(tmp_path, capsys):
    out = tmp_path / "never"
    assert simulate(tmp_path / "nope.scene", out) != 0
    assert not out.exists()
    assert "scene" in capsys.readouterr().err


def test_usage_errors_exit_one(scene, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    assert main(["simulate", "--scene", str(scene), "-o", str(tmp_path / "x"), "--motor-step-deg", "7"]) == 1


def test_full_static_pipeline(scene, tmp_path, capsys):
    sess = tmp_path / "sess"
    assert simulate(scene, sess, "--relative-sigma", "0", "--absolute-sigma", "0", "--ground-truth") == 0
    cloud = tmp_path / "cloud.txt"
    assert main(["build", str(sess), "-o", str(cloud)]) == 0
    pts = read_pointcloud(cloud)
    assert pts.has_origins and len(pts) > 1000

    same = tmp_path / "same.txt"
    assert main(["filter", str(cloud), "-o", str(same)]) == 0
    assert same.read_bytes() == cloud.read_bytes()
    ref_cloud = tmp_path / "ref.txt"
    assert main(["filter", str(cloud), "-o", str(ref_cloud), "--preset", "ref"]) == 0
    out = capsys.readouterr().out
    assert "DownSample -> PassThrough -> Gaussian" in out

    oct_a, oct_b = tmp_path / "a.oct", tmp_path / "b.oct"
    assert main(["to-octree", str(cloud), "-o", str(oct_a), "--resolution", "0.2"]) == 0
    assert main(["to-octree", str(cloud), "-o", str(oct_b), "--resolution", "0.2"]) == 0
    assert oct_a.read_bytes() == oct_b.read_bytes()
    assert "leaf_count:" in capsys.readouterr().out

    report = tmp_path / "report.txt"
    assert main(["compare", str(oct_a), str(oct_b), "-o", str(report)]) == 0
    kv = parse_report(report.read_text())
    assert kv["iou_weighted"] == "1" and kv["log_odds_total"] == "0" and kv["correlation"] == "1"

    gt = sess / "ground_truth.oct"
    assert main(["compare", str(gt), str(oct_a)]) == 0
    kv = parse_report(capsys.readouterr().out)
    assert float(kv["iou_weighted"]) < 1


def test_filter_bad_axis_and_preset(tmp_path):
    cloud = tmp_path / "c.txt"
    cloud.write_text("1 0\n0 0 0\n")
    assert main(["filter", str(cloud), "-o", str(tmp_path / "o.txt"), "--stage", "passthrough:w:0:1"]) == 1
    assert main(["filter", str(cloud), "-o", str(tmp_path / "o.txt"), "--preset", "map7"]) == 1
    assert main(["filter", str(cloud), "-o", str(cloud)]) == 1


def test_build_all_dropouts(tmp_path, capsys):
    sess = tmp_path / "s"
    sess.mkdir()
    (sess / "session.cfg").write_text("mode = static\nstations = 0 0\nmotor_step = 0.785398163397448\n")
    (sess / "scan_00.log").write_text("".join(f"{0.001 * i} {0.1 * i} nan 0 0.785398163397448\n" for i in range(20)))
    assert main(["build", str(sess), "-o", str(tmp_path / "c.txt")]) == 2
    assert "empty cloud" in capsys.readouterr().err
    assert not (tmp_path / "c.txt").exists()


def test_to_octree_needs_origin(tmp_path):
    cloud = tmp_path / "c.txt"
    cloud.write_text("2 0\n1 0 0\n0 1 0\n")
    assert main(["to-octree", str(cloud), "-o", str(tmp_path / "t.oct")]) == 2
    assert main(["to-octree", str(cloud), "-o", str(tmp_path / "t.oct"), "--origin", "0 0 0.5"]) == 0
    empty = tmp_path / "e.txt"
    empty.write_text("0 1\n")
    assert main(["to-octree", str(empty), "-o", str(tmp_path / "e.oct")]) == 0
    assert len(OccupancyOctree.load(tmp_path / "e.oct")) == 0


def test_compare_errors(tmp_path):
    a, b = OccupancyOctree(0.1, depth=4), OccupancyOctree(0.2, depth=4)
    a.set_voxel((0, 0, 0), 1.0)
    b.set_voxel((0, 0, 0), 1.0)
    a.save(tmp_path / "a.oct")
    b.save(tmp_path / "b.oct")
    assert main(["compare", str(tmp_path / "a.oct"), str(tmp_path / "b.oct")]) == 2
    assert main(["compare", str(tmp_path / "a.oct"), str(tmp_path / "missing.oct")]) == 2


def test_compare_table_and_box(tmp_path, capsys):
    a = OccupancyOctree(0.1, depth=4)
    a.set_voxel((0, 0, 0), 1.0)
    a.save(tmp_path / "a.oct")
    assert main(["compare", str(tmp_path / "a.oct"), str(tmp_path / "a.oct"), "--table", "--box", "0 0 0 0.4 0.4 0.4"]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    cells = dict(zip(header.split(","), row.split(",")))
    assert cells["voxel_count"] == "64"
    assert cells["iou_weighted"] == "1"


def test_sweep_single_resolution(tmp_path, capsys):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (200, 3))
    cloud = tmp_path / "c.txt"
    cloud.write_text("200 0\n" + "".join(f"{x} {y} {z}\n" for x, y, z in pts))
    assert main(["sweep", str(cloud), "--resolutions", "0.25", "--trials", "1", "--origin", "0 0 0"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("resolution,conversion_ms")
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert row["iou_weighted"] == "1" and row["log_odds_total"] == "0"


def test_config_file_and_flag_precedence(scene, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"scene = {scene}\nmotor_step_deg = 90\nrevolutions = 2\n")
    assert main(["simulate", "--config", str(cfg), "-o", str(tmp_path / "s")]) == 0
    assert len(data_lines(tmp_path / "s" / "scan_00.log")) == 1000
    assert main(["simulate", "--config", str(cfg), "-o", str(tmp_path / "t"), "--revolutions", "1"]) == 0
    assert len(data_lines(tmp_path / "t" / "scan_00.log")) == 500
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["simulate", "--config", str(bad), "--scene", str(scene), "-o", str(tmp_path / "u")]) == 1


def test_trolley_session(scene, tmp_path, capsys):
    sess = tmp_path / "trolley"
    rc = main([
        "simulate", "--scene", str(scene), "-o", str(sess), "--mode", "trolley",
        "--rev-frequency", "5", "--waypoints", "-1 -1 0 0; 1 1 1.2 3", "--height", "0.5",
    ])
    assert rc == 0
    for name in ("scan.log", "yaw_a.txt", "yaw_b.txt", "yaw_drift.txt", "position.txt", "truth.txt"):
        assert (sess / name).is_file()
    assert main(["build", str(sess), "-o", str(tmp_path / "c.txt")]) == 0
    assert "gaps: 0" in capsys.readouterr().out
    assert main(["build", str(sess), "-o", str(tmp_path / "d.txt"), "--yaw-source", "drift"]) == 0


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "lidarmap", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "simulate" in r.stdout and "sweep" in r.stdout
