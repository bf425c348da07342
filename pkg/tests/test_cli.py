import csv

from nftrack.cli import main
from nftrack.harness import METRICS_HEADER, load_poses_csv
from nftrack.imageio import load_pgm


def test_benchmark_writes_metrics(tmp_path):
    out = tmp_path / "metrics.csv"
    main(["benchmark", "--frames", "12", "--elev-end", "88",
          "--azimuth-end", "6", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert lines[0] == METRICS_HEADER
    assert len(lines) == 13


def test_render_and_replay_from_pose_file(tmp_path):
    frames_dir = tmp_path / "frames"
    main(["render", "--frames", "6", "--elev-end", "89", "--azimuth-end", "4",
          "--noise-sigma", "0", "--out-dir", str(frames_dir)])
    pgms = sorted(frames_dir.glob("frame_*.pgm"))
    assert len(pgms) == 6
    img = load_pgm(pgms[0])
    assert img.size == (320, 240)
    poses = load_poses_csv(frames_dir / "poses.csv")
    assert len(poses) == 6 and all(p is not None for p in poses)

    out = tmp_path / "metrics.csv"
    main(["benchmark", "--trajectory", str(frames_dir / "poses.csv"),
          "--noise-sigma", "0", "--out", str(out)])
    assert len(out.read_text().splitlines()) == 7


def test_dump_pattern_csv(tmp_path, capsys):
    out = tmp_path / "pattern.csv"
    main(["dump-pattern", "--out", str(out)])
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["index", "px", "py", "qx", "qy"]
    assert len(rows) == 257
    assert all(abs(int(v)) <= 15 for row in rows[1:] for v in row[1:])


def test_make_target_and_file_template(tmp_path):
    target = tmp_path / "target.pgm"
    main(["make-target", "--out", str(target)])
    assert load_pgm(target).size == (320, 226)

    out = tmp_path / "m.csv"
    main(["benchmark", "--template", str(target), "--frames", "4",
          "--elev-end", "89", "--azimuth-end", "3", "--out", str(out)])
    assert len(out.read_text().splitlines()) == 5


def test_config_file_flows_through(tmp_path):
    cfg = tmp_path / "tracker.cfg"
    cfg.write_text("features.fast_threshold=22\nransac.max_iterations=400\n")
    out = tmp_path / "m.csv"
    main(["benchmark", "--frames", "4", "--elev-end", "89", "--azimuth-end", "3",
          "--config", str(cfg), "--out", str(out)])
    assert out.exists()


def test_blackout_argument(tmp_path):
    out = tmp_path / "m.csv"
    main(["benchmark", "--frames", "10", "--elev-end", "88", "--azimuth-end", "5",
          "--blackout", "4:6", "--out", str(out)])
    rows = list(csv.DictReader(out.open()))
    assert rows[4]["pose_found"] == "0" and rows[5]["pose_found"] == "0"
