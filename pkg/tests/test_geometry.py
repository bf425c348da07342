import math

import numpy as np
import pytest

from oracles import numeric_projection_jacobian, pinhole_project, random_homography

from nftrack.core import CameraIntrinsics, Homography, Pose
from nftrack.errors import (
    BehindCameraError,
    DegenerateGeometryError,
    EstimationFailedError,
    InvalidInputError,
    SingularProjectionError,
)
from nftrack.geometry import (
    RansacParams,
    axis_angle_from_rotation,
    homography_dlt,
    pnp_iterative,
    pose_from_homography,
    project_points,
    projection_jacobian,
    ransac_homography,
    reprojection_error,
    rotation_from_axis_angle,
    transform_points,
)


class TestTransformPoints:
    def test_identity(self):
        h = Homography(np.eye(3))
        pts = np.array([[3.0, 4.0], [-1.0, 2.0]])
        assert np.allclose(transform_points(h, pts), pts)

    def test_scaling(self):
        h = Homography(np.diag([2.0, 2.0, 1.0]))
        assert np.allclose(transform_points(h, [[3.0, 4.0]]), [[6.0, 8.0]])

    def test_translation(self):
        h = Homography([[1, 0, 5], [0, 1, 0], [0, 0, 1]])
        assert np.allclose(transform_points(h, [[0.0, 0.0]]), [[5.0, 0.0]])

    def test_point_at_infinity_rejected(self):
        h = Homography([[1, 0, 0], [0, 1, 0], [-1e-2, 0, 1]])
        with pytest.raises(SingularProjectionError):
            transform_points(h, [[100.0, 0.0]])


class TestHomographyDlt:
    def test_identity_from_four_points(self):
        src = np.array([[0, 0], [100, 0], [100, 80], [0, 80]], dtype=float)
        h = homography_dlt(src, src)
        assert np.max(np.abs(h.h - np.eye(3))) < 1e-9

    def test_translation_recovered_exactly(self):
        gt = np.array([[1, 0, 5], [0, 1, -3], [0, 0, 1]], dtype=float)
        src = np.array([[0, 0], [100, 0], [100, 80], [0, 80], [37, 52], [81, 13]],
                       dtype=float)
        dst = transform_points(Homography(gt), src)
        h = homography_dlt(src, dst)
        assert np.max(np.abs(h.h - gt)) < 1e-6

    def test_random_projective_maps_recovered(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            gt = Homography(random_homography(rng))
            src = rng.uniform(0, 320, (20, 2))
            dst = transform_points(gt, src)
            h = homography_dlt(src, dst)
            assert np.max(np.abs(h.h - gt.h)) / np.max(np.abs(gt.h)) < 1e-6

    def test_collinear_sample_rejected(self):
        src = np.array([[0, 0], [10, 10], [20, 20], [5, 30]], dtype=float)
        dst = src.copy()
        src[3] = [30, 30]  # now all four on the diagonal
        with pytest.raises(DegenerateGeometryError):
            homography_dlt(src, dst)

    def test_needs_four_pairs(self):
        with pytest.raises(InvalidInputError):
            homography_dlt(np.zeros((3, 2)), np.zeros((3, 2)))


def make_ransac_instance(rng, n_in=20, n_out=20):
    gt = Homography(random_homography(rng))
    src_in = rng.uniform(0, 300, (n_in, 2))
    dst_in = transform_points(gt, src_in)
    src_out = rng.uniform(0, 300, (n_out, 2))
    dst_out = rng.uniform(0, 300, (n_out, 2))
    src = np.vstack([src_in, src_out])
    dst = np.vstack([dst_in, dst_out])
    return gt, src, dst


class TestRansac:
    def test_outlier_free_keeps_everything(self):
        rng = np.random.default_rng(0)
        gt, src, dst = make_ransac_instance(rng, n_in=20, n_out=0)
        h, mask = ransac_homography(src, dst, rng_seed=1)
        assert mask.all()
        assert np.max(np.abs(h.h - gt.h)) < 1e-6

    def test_half_outliers_recovered(self):
        corners = np.array([[0, 0], [300, 0], [300, 300], [0, 300]], dtype=float)
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            gt, src, dst = make_ransac_instance(rng)
            h, mask = ransac_homography(src, dst, rng_seed=seed)
            assert mask[:20].sum() == 20, "every true inlier recovered"
            assert mask[20:].sum() <= 2, "at most two false inliers"
            err = np.abs(transform_points(h, corners) - transform_points(gt, corners))
            assert err.max() < 1.0

    def test_collinear_input_fails(self):
        src = np.array([[i, i] for i in range(5)], dtype=float)
        with pytest.raises(EstimationFailedError):
            ransac_homography(src, src.copy(), RansacParams(min_inliers=4), rng_seed=0)

    def test_too_few_inliers_fails(self):
        rng = np.random.default_rng(5)
        src = rng.uniform(0, 300, (12, 2))
        dst = rng.uniform(0, 300, (12, 2))  # pure noise
        with pytest.raises(EstimationFailedError):
            ransac_homography(src, dst, rng_seed=0)

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(7)
        _, src, dst = make_ransac_instance(rng)
        h1, m1 = ransac_homography(src, dst, rng_seed=11)
        h2, m2 = ransac_homography(src, dst, rng_seed=11)
        assert np.array_equal(h1.h, h2.h) and np.array_equal(m1, m2)


SQUARE = np.array([[-0.1, -0.1, 0], [0.1, -0.1, 0], [0.1, 0.1, 0], [-0.1, 0.1, 0]])


class TestPnp:
    def test_square_at_two_meters(self):
        k = CameraIntrinsics(fx=100, fy=100, cx=0, cy=0)
        img, _ = project_points(np.eye(3), np.array([0, 0, 2.0]), k, SQUARE)
        assert np.allclose(np.abs(img), 5.0)
        pose = pnp_iterative(SQUARE, img, k)
        rot_err = math.degrees(math.acos(min(1.0, (np.trace(pose.r) - 1) / 2)))
        assert rot_err < 0.01
        assert np.max(np.abs(pose.t - [0, 0, 2.0])) < 1e-4

    def test_ground_truth_initialization_is_fixed_point(self):
        rng = np.random.default_rng(3)
        k = CameraIntrinsics(fx=280, fy=280, cx=160, cy=120)
        r = rotation_from_axis_angle(rng.normal(0, 0.3, 3))
        t = np.array([0.02, -0.01, 0.6])
        obj = np.column_stack([rng.uniform(-0.1, 0.1, (12, 2)), np.zeros(12)])
        img, _ = project_points(r, t, k, obj)
        pose = pnp_iterative(obj, img, k, initial=Pose(r=r, t=t))
        _, mean = reprojection_error(pose, k, obj, img)
        assert mean < 1e-9

    def test_monte_carlo_noise(self):
        k = CameraIntrinsics(fx=280, fy=280, cx=160, cy=120)
        rot_errs, trans_errs = [], []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            r = rotation_from_axis_angle(rng.normal(0, 0.4, 3))
            t = np.array([rng.normal(0, 0.05), rng.normal(0, 0.05), rng.uniform(0.4, 0.8)])
            obj = np.column_stack([rng.uniform(-0.14, 0.14, (20, 2)), np.zeros(20)])
            img, depths = project_points(r, t, k, obj)
            if np.any(depths <= 0):
                continue
            noisy = img + rng.normal(0, 0.5, img.shape)
            pose = pnp_iterative(obj, noisy, k)
            cos_r = min(1.0, max(-1.0, (np.trace(r.T @ pose.r) - 1) / 2))
            rot_errs.append(math.degrees(math.acos(cos_r)))
            trans_errs.append(np.linalg.norm(pose.t - t) / np.linalg.norm(t))
        assert np.median(rot_errs) < 1.0
        assert np.median(trans_errs) < 0.02

    def test_collinear_object_points_rejected(self):
        k = CameraIntrinsics(fx=100, fy=100, cx=0, cy=0)
        obj = np.array([[i * 0.01, i * 0.01, 0] for i in range(5)])
        img = np.zeros((5, 2))
        with pytest.raises(DegenerateGeometryError):
            pnp_iterative(obj, img, k)

    def test_initialization_needs_plane(self):
        k = CameraIntrinsics(fx=100, fy=100, cx=0, cy=0)
        obj = np.array([[0, 0, 0.1], [0.1, 0, 0.2], [0.1, 0.1, 0.3], [0, 0.1, 0.15]])
        with pytest.raises(InvalidInputError):
            pnp_iterative(obj, np.zeros((4, 2)), k)


class TestJacobian:
    def test_matches_central_differences(self):
        k = CameraIntrinsics(fx=280, fy=280, cx=160, cy=120)
        worst = 0.0
        for seed in range(25):
            rng = np.random.default_rng(seed)
            omega = rng.normal(0, 0.6, 3)
            t = np.array([rng.normal(0, 0.1), rng.normal(0, 0.1), rng.uniform(0.4, 1.5)])
            obj = np.column_stack([rng.uniform(-0.12, 0.12, (8, 2)), np.zeros(8)])
            _, depths = project_points(rotation_from_axis_angle(omega), t, k, obj)
            if np.any(depths <= 0.05):
                continue
            ja = projection_jacobian(omega, t, obj, k)
            jn = numeric_projection_jacobian(omega, t, obj, k)
            worst = max(worst, np.max(np.abs(ja - jn)) / max(np.max(np.abs(jn)), 1e-9))
        assert worst < 1e-4


class TestRotations:
    def test_axis_angle_roundtrip(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            w = rng.normal(0, 1.0, 3)
            r = rotation_from_axis_angle(w)
            w2 = axis_angle_from_rotation(r)
            assert np.allclose(rotation_from_axis_angle(w2), r, atol=1e-9)

    def test_near_pi_branch(self):
        w = np.array([math.pi - 1e-7, 0, 0])
        r = rotation_from_axis_angle(w)
        w2 = axis_angle_from_rotation(r)
        assert np.allclose(rotation_from_axis_angle(w2), r, atol=1e-6)


class TestReprojectionError:
    def test_exact_projection_is_zero(self):
        k = CameraIntrinsics(fx=100, fy=100, cx=0, cy=0)
        img, _ = project_points(np.eye(3), np.array([0, 0, 2.0]), k, SQUARE)
        per, mean = reprojection_error(Pose(r=np.eye(3), t=np.array([0, 0, 2.0])),
                                       k, SQUARE, img)
        assert np.allclose(per, 0) and mean == 0

    def test_three_four_five(self):
        k = CameraIntrinsics(fx=100, fy=100, cx=0, cy=0)
        img, _ = project_points(np.eye(3), np.array([0, 0, 2.0]), k, SQUARE)
        img[0] += [3.0, 4.0]
        per, _ = reprojection_error(Pose(r=np.eye(3), t=np.array([0, 0, 2.0])),
                                    k, SQUARE, img)
        assert abs(per[0] - 5.0) < 1e-12

    def test_matches_independent_projector(self):
        rng = np.random.default_rng(8)
        k = CameraIntrinsics(fx=230, fy=240, cx=150, cy=110)
        r = rotation_from_axis_angle(rng.normal(0, 0.3, 3))
        t = np.array([0.01, 0.02, 0.7])
        obj = np.column_stack([rng.uniform(-0.1, 0.1, (6, 2)), np.zeros(6)])
        img = rng.uniform(0, 320, (6, 2))
        per, _ = reprojection_error(Pose(r=r, t=t), k, obj, img)
        ref = pinhole_project(r, t, k.fx, k.fy, k.cx, k.cy, obj)
        assert np.allclose(per, np.sqrt(((ref - img) ** 2).sum(axis=1)))

    def test_behind_camera_rejected(self):
        k = CameraIntrinsics(fx=100, fy=100, cx=0, cy=0)
        with pytest.raises(BehindCameraError):
            reprojection_error(Pose(r=np.eye(3), t=np.array([0, 0, -2.0])),
                               k, SQUARE, np.zeros((4, 2)))


class TestPosePathConsistency:
    def test_corner_transfer_agrees_with_pnp_projection(self, default_target, intrinsics):
        """Noiseless: projecting corners_3d through the corner-path pose equals
        transform_points(H, corners_2d) within 2x the RANSAC inlier threshold."""
        from nftrack.harness import ground_truth_homography, orbit_pose

        for elevation in (90, 70, 50):
            gt_pose = orbit_pose(0.5, elevation, 25.0)
            h = ground_truth_homography(default_target, gt_pose, intrinsics)
            pose = pose_from_homography(h, default_target.corners_2d,
                                        default_target.corners_3d, intrinsics)
            proj, _ = project_points(pose.r, pose.t, intrinsics, default_target.corners_3d)
            via_h = transform_points(h, default_target.corners_2d)
            assert np.max(np.abs(proj - via_h)) < 2 * RansacParams().inlier_threshold

    def test_returned_pose_is_orthonormal(self):
        rng = np.random.default_rng(2)
        k = CameraIntrinsics(fx=280, fy=280, cx=160, cy=120)
        r = rotation_from_axis_angle(rng.normal(0, 0.5, 3))
        t = np.array([0.0, 0.0, 0.5])
        img, _ = project_points(r, t, k, SQUARE)
        pose = pnp_iterative(SQUARE, img + rng.normal(0, 1.0, img.shape), k)
        assert np.max(np.abs(pose.r.T @ pose.r - np.eye(3))) < 1e-9
