import numpy as np
import pytest

from nftrack.core import Pose
from nftrack.errors import InvalidInputError
from nftrack.geometry import pnp_iterative, project_points, transform_points
from nftrack.harness import (
    DEFAULT_INTRINSICS,
    METRICS_HEADER,
    POSES_HEADER,
    SequenceMetrics,
    TrajectorySpec,
    evaluate,
    ground_truth_homography,
    load_poses_csv,
    orbit_pose,
    render_frame,
    render_sequence,
    rotation_error_deg,
    write_metrics_csv,
    write_poses_csv,
)
from nftrack.pipeline import TrackerConfig


class TestOrbitPose:
    def test_fronto_parallel_is_identity(self):
        p = orbit_pose(0.5, 90, 0)
        assert np.allclose(p.r, np.eye(3), atol=1e-12)
        assert np.allclose(p.t, [0, 0, 0.5], atol=1e-12)

    def test_depth_always_positive(self):
        for el in (90, 60, 30, 10):
            for az in (0, 45, 180, 300):
                p = orbit_pose(0.5, el, az)
                _, z = project_points(p.r, p.t, DEFAULT_INTRINSICS,
                                      np.array([[0.0, 0.0, 0.0]]))
                assert z[0] > 0

    def test_roll_continuous_along_arc(self, default_target):
        prev = None
        for i in range(60):
            el = 90 - i * 0.5
            h = ground_truth_homography(default_target, orbit_pose(0.5, el, i),
                                        DEFAULT_INTRINSICS)
            c = transform_points(h, default_target.corners_2d)
            if prev is not None:
                assert np.abs(c - prev).max() < 12, "no roll jumps mid-trajectory"
            prev = c


class TestRenderSequence:
    def test_deterministic_given_seed(self, default_target):
        spec = TrajectorySpec(frames=3, noise_sigma=2.0, seed=8)
        a = render_sequence(default_target, spec)
        b = render_sequence(default_target, spec)
        assert all(x == y for x, y in zip(a.frames, b.frames))

    def test_fronto_parallel_projects_centered_rectangle(self, default_target):
        pose = orbit_pose(0.5, 90, 0)
        corners, _ = project_points(pose.r, pose.t, DEFAULT_INTRINSICS,
                                    default_target.corners_3d)
        # hand-computed: x = 160 +- 280*0.1485/0.5, y = 120 +- 280*0.105/0.5
        assert np.allclose(corners[:, 0].min(), 160 - 280 * 0.1485 / 0.5, atol=1e-6)
        assert np.allclose(corners[:, 0].max(), 160 + 280 * 0.1485 / 0.5, atol=1e-6)
        assert np.allclose(corners[:, 1].min(), 120 - 280 * 0.105 / 0.5, atol=1e-6)
        assert np.allclose(corners[:, 1].max(), 120 + 280 * 0.105 / 0.5, atol=1e-6)

    def test_blackout_frames_are_black_with_absent_pose(self, default_target):
        spec = TrajectorySpec(frames=5, blackout=(1, 3), seed=0)
        seq = render_sequence(default_target, spec)
        for i in (1, 2):
            assert np.all(seq.frames[i].pixels == 0)
            assert seq.poses[i] is None
        assert seq.poses[0] is not None

    def test_noiseless_frame_matches_direct_render(self, default_target):
        spec = TrajectorySpec(frames=1, seed=0)
        seq = render_sequence(default_target, spec)
        pose = spec.pose_at(0)
        direct = render_frame(default_target, pose, DEFAULT_INTRINSICS)
        assert seq.frames[0] == direct

    def test_target_behind_camera_rejected(self, default_target):
        bad = Pose(r=np.eye(3), t=np.array([0.0, 0.0, -0.5]))
        spec = TrajectorySpec(frames=1, poses=(bad,))
        with pytest.raises(InvalidInputError):
            render_sequence(default_target, spec)

    def test_ground_truth_self_check(self, default_target):
        """PnP on noiseless rendered corner correspondences recovers each pose."""
        for i, el in enumerate((90, 75, 55)):
            gt = orbit_pose(0.5, el, 10.0 * i)
            h = ground_truth_homography(default_target, gt, DEFAULT_INTRINSICS)
            img_corners = transform_points(h, default_target.corners_2d)
            pose = pnp_iterative(default_target.corners_3d, img_corners,
                                 DEFAULT_INTRINSICS)
            assert rotation_error_deg(pose.r, gt.r) < 0.1
            assert np.linalg.norm(pose.t - gt.t) < 1e-3

    def test_spec_validation(self):
        with pytest.raises(InvalidInputError):
            TrajectorySpec(frames=0)
        with pytest.raises(InvalidInputError):
            TrajectorySpec(frames=5, elevation_start=0)
        with pytest.raises(InvalidInputError):
            TrajectorySpec(frames=5, blackout=(4, 9))
        with pytest.raises(InvalidInputError):
            TrajectorySpec(frames=5, background="plaid")


@pytest.fixture(scope="module")
def small_metrics(default_target):
    spec = TrajectorySpec(frames=24, elevation_start=90, elevation_end=84,
                          azimuth_start=0, azimuth_end=10, noise_sigma=2.0,
                          blackout=(10, 13), seed=4)
    seq = render_sequence(default_target, spec)
    return evaluate(TrackerConfig(), seq)


class TestEvaluate:
    def test_poses_found_after_acquisition(self, small_metrics):
        rows = small_metrics.rows
        first = small_metrics.first_acquisition_frame
        assert first == 0
        visible = [r for r in rows if r.gt_present and r.frame >= first]
        found = sum(1 for r in visible if r.pose_found)
        assert found / len(visible) >= 0.9

    def test_blackout_causes_one_transition_and_fast_reacquisition(self, small_metrics):
        rows = small_metrics.rows
        transitions = sum(1 for a, b in zip(rows, rows[1:])
                          if a.phase == "tracking" and b.phase == "detecting")
        assert transitions == 1
        assert len(small_metrics.reacquisition_latencies) == 1
        assert small_metrics.reacquisition_latencies[0] <= 2

    def test_aggregates_recomputable_from_rows(self, small_metrics):
        recomputed = SequenceMetrics.from_rows(small_metrics.rows)
        assert recomputed == small_metrics

    def test_empty_sequence_rejected(self, default_target):
        spec = TrajectorySpec(frames=1, seed=0)
        seq = render_sequence(default_target, spec)
        empty = type(seq)(template=seq.template, k=seq.k, spec=seq.spec,
                          frames=(), poses=())
        with pytest.raises(InvalidInputError):
            evaluate(TrackerConfig(), empty)


class TestCsv:
    def test_metrics_header_bit_exact(self, small_metrics, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(small_metrics, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ("frame,phase,pose_found,corner_err_px,rot_err_deg,"
                            "trans_err_m,t_feature_us,t_match_us,t_ransac_us,"
                            "t_pnp_us,t_warp_us,t_ncc_us,t_total_us")
        assert lines[0] == METRICS_HEADER
        assert len(lines) == len(small_metrics.rows) + 1

    def test_poses_roundtrip_with_blackout(self, default_target, tmp_path):
        spec = TrajectorySpec(frames=6, blackout=(2, 4), seed=1)
        seq = render_sequence(default_target, spec)
        path = tmp_path / "poses.csv"
        write_poses_csv(seq.poses, path)
        assert path.read_text().splitlines()[0] == POSES_HEADER
        loaded = load_poses_csv(path)
        assert len(loaded) == 6
        for orig, back in zip(seq.poses, loaded):
            if orig is None:
                assert back is None
            else:
                assert np.allclose(orig.r, back.r, atol=1e-9)
                assert np.allclose(orig.t, back.t, atol=1e-9)


class TestSweep:
    def test_single_elevation_detection(self, default_target):
        from nftrack.harness import SWEEP_ORBIT_RADIUS, detect_at_elevation

        assert detect_at_elevation(TrackerConfig(), default_target,
                                   DEFAULT_INTRINSICS, 90, SWEEP_ORBIT_RADIUS, 0)

    def test_grazing_view_fails(self, default_target):
        from nftrack.harness import SWEEP_ORBIT_RADIUS, detect_at_elevation

        assert not detect_at_elevation(TrackerConfig(), default_target,
                                       DEFAULT_INTRINSICS, 5, SWEEP_ORBIT_RADIUS, 0,
                                       ransac_iterations=2000)
