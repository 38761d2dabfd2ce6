"""
Lifting, EPnP and RANSAC
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from lidarcam_reg.errors import DegenerateConfiguration, InsufficientCorrespondences, InvalidConfig, NoConsensus
from lidarcam_reg.evaluation import pose_errors
from lidarcam_reg.geometry import CameraIntrinsics, DepthMap, RigidTransform, fill_depth_nearest
from lidarcam_reg.matching import FineMatchSet
from lidarcam_reg.pose import (
    Correspondences, epnp, epnp_arrays, lift_matches, procrustes, ransac_pnp, reprojection_errors,
    required_iterations,
)

K = CameraIntrinsics(400.0, 400.0, 320.0, 240.0, 640, 480)


def scene_pose(seed: int) -> RigidTransform:
    rotation = Rotation.from_euler("YXZ", np.random.default_rng(seed).uniform(-20, 20, 3), degrees=True)
    return RigidTransform(rotation.as_matrix(), np.random.default_rng(seed + 1).uniform(-1, 1, 3))


def correspondences(pose: RigidTransform, n: int, seed: int, planar: bool = False):
    rng = np.random.default_rng(seed)
    u = rng.uniform(20, K.width - 20, n)
    v = rng.uniform(20, K.height - 20, n)
    z = np.full(n, 8.0) if planar else rng.uniform(4.0, 20.0, n)
    cam = np.column_stack([(u - K.cx) / K.fx * z, (v - K.cy) / K.fy * z, z])
    return pose.inverse().apply(cam), np.column_stack([u, v])


def fine_from(lidar_px, cam_px) -> FineMatchSet:
    lidar_px = np.asarray(lidar_px, dtype=np.float64)
    n = len(lidar_px)
    return FineMatchSet(lidar_px, np.asarray(cam_px, dtype=np.float64), np.linspace(0.5, 1.0, n),
                        np.ones(n), np.zeros(n, dtype=bool), np.zeros((n, 2)), np.zeros((n, 2)), 5)


class TestEPnP:

    @given(st.integers(0, 10_000), st.integers(8, 60))
    @settings(max_examples=20)
    def test_exact_recovery(self, seed, n):
        pose = scene_pose(seed)
        points, pixels = correspondences(pose, n, seed)
        estimate = epnp_arrays(points, pixels, K)
        assert estimate.allclose(pose, atol=1e-5)

    def test_planar_points(self):
        pose = scene_pose(7)
        points, pixels = correspondences(pose, 30, 7, planar=True)
        assert epnp_arrays(points, pixels, K).allclose(pose, atol=1e-6)

    def test_noisy_pixels(self, rng):
        pose = scene_pose(3)
        points, pixels = correspondences(pose, 200, 3)
        noisy = pixels + rng.normal(scale=0.5, size=pixels.shape)
        estimate = epnp(Correspondences.from_arrays(points, noisy), K)
        assert np.mean(reprojection_errors(estimate, points, pixels, K)) < 1.0

    def test_too_few(self):
        points, pixels = correspondences(scene_pose(0), 3, 0)
        with pytest.raises(InsufficientCorrespondences):
            epnp_arrays(points, pixels, K)

    def test_collinear(self):
        points = np.column_stack([np.linspace(-1, 1, 6), np.zeros(6), np.full(6, 5.0)])
        pixels = np.column_stack([K.fx * points[:, 0] / 5 + K.cx, np.full(6, K.cy)])
        with pytest.raises(DegenerateConfiguration):
            epnp_arrays(points, pixels, K)

    def test_procrustes(self, rng):
        pose = scene_pose(11)
        world = rng.uniform(-5, 5, (10, 3))
        assert procrustes(world, pose.apply(world)).allclose(pose, atol=1e-10)

    def test_points_behind_have_infinite_error(self):
        err = reprojection_errors(RigidTransform.identity(), np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 2.0]]),
                                  np.array([[320.0, 240.0], [320.0, 240.0]]), K)
        assert np.isinf(err[0]) and err[1] == 0.0


class TestRansac:

    def corrupted(self, seed: int, n: int = 120, outliers: float = 0.3):
        pose = scene_pose(seed)
        points, pixels = correspondences(pose, n, seed)
        rng = np.random.default_rng(seed)
        bad = rng.uniform(size=n) < outliers
        pixels[bad] = rng.uniform([0, 0], [K.width, K.height], (int(bad.sum()), 2))
        return pose, Correspondences.from_arrays(points, pixels), bad

    def test_recovers_pose_with_outliers(self):
        pose, corrs, bad = self.corrupted(5)
        estimate = ransac_pnp(corrs, K, seed=1)
        assert estimate.transform.allclose(pose, atol=1e-6)
        # corrupted pixels can still land near their true projection
        truth = reprojection_errors(pose, corrs.points3d, corrs.pixels, K) < 4.0
        assert np.all(truth[~bad])
        np.testing.assert_array_equal(estimate.inlier_mask, truth)
        assert estimate.mean_reprojection_error < 1e-6
        assert estimate.iterations_used < 1000

    def test_repeated_trials_at_thirty_percent_outliers(self):
        within = 0
        for trial in range(100):
            pose = scene_pose(1000 + trial)
            points, pixels = correspondences(pose, 100, 1000 + trial)
            rng = np.random.default_rng(trial)
            pixels = pixels + rng.normal(scale=0.1, size=pixels.shape)
            bad = rng.permutation(100)[:30]
            pixels[bad] = rng.uniform([0, 0], [K.width, K.height], (30, 2))
            estimate = ransac_pnp(Correspondences.from_arrays(points, pixels), K, seed=trial)
            err = pose_errors(estimate.transform, pose)
            within += err.e_r < 0.1 and err.e_t < 0.01
        assert within >= 99

    def test_mask_belongs_to_returned_pose(self, rng):
        _, corrs, _ = self.corrupted(13)
        pixels = corrs.pixels + rng.normal(scale=0.5, size=corrs.pixels.shape)
        noisy = Correspondences.from_arrays(corrs.points3d, pixels)
        estimate = ransac_pnp(noisy, K, seed=2)
        err = reprojection_errors(estimate.transform, noisy.points3d, noisy.pixels, K)
        np.testing.assert_array_equal(estimate.inlier_mask, err < 4.0)
        assert estimate.mean_reprojection_error == pytest.approx(err[err < 4.0].mean())

    def test_deterministic_for_seed(self):
        _, corrs, _ = self.corrupted(9)
        a, b = ransac_pnp(corrs, K, seed=4), ransac_pnp(corrs, K, seed=4)
        assert a.transform.allclose(b.transform, atol=0.0)
        assert a.iterations_used == b.iterations_used

    def test_clean_data_stops_early(self):
        pose = scene_pose(2)
        points, pixels = correspondences(pose, 40, 2)
        estimate = ransac_pnp(Correspondences.from_arrays(points, pixels), K)
        assert estimate.iterations_used == 1
        assert estimate.inlier_count == 40

    def test_no_consensus(self, rng):
        points = rng.uniform(-5, 5, (4, 3)) + np.array([0.0, 0.0, 20.0])
        pixels = np.array([[10.0, 10.0], [600.0, 20.0], [30.0, 450.0], [620.0, 470.0]])
        corrs = Correspondences.from_arrays(points, pixels)
        with pytest.raises((NoConsensus, DegenerateConfiguration)):
            ransac_pnp(corrs, K, max_iters=5, inlier_threshold=1e-6)

    def test_too_few(self):
        with pytest.raises(InsufficientCorrespondences):
            ransac_pnp(Correspondences.from_arrays(np.zeros((3, 3)), np.zeros((3, 2))), K)

    @pytest.mark.parametrize("kwargs", [{"confidence": 1.0}, {"max_iters": 0}, {"inlier_threshold": 0.0}])
    def test_bad_parameters(self, kwargs):
        points, pixels = correspondences(scene_pose(0), 10, 0)
        with pytest.raises(InvalidConfig):
            ransac_pnp(Correspondences.from_arrays(points, pixels), K, **kwargs)

    def test_required_iterations(self):
        assert required_iterations(1.0, 0.999) == 0.0
        assert required_iterations(0.0, 0.999) == float("inf")
        assert required_iterations(0.5, 0.99) == pytest.approx(np.log(0.01) / np.log(1 - 1 / 16))

    def test_report(self):
        pose = scene_pose(2)
        points, pixels = correspondences(pose, 10, 2)
        text = ransac_pnp(Correspondences.from_arrays(points, pixels), K).format_report()
        assert "inliers = 10\n" in text and "correspondences = 10\n" in text


class TestLift:

    def test_points_in_lidar_frame(self):
        depth = DepthMap(np.full((480, 640), 5.0), np.ones((480, 640), dtype=bool))
        view = scene_pose(4)
        fine = fine_from([[420.0, 240.0], [320.0, 240.0]], [[100.0, 100.0], [200.0, 200.0]])
        corrs = lift_matches(fine, depth, K, view_pose=view)
        np.testing.assert_allclose(view.apply(corrs.points3d), [[1.25, 0.0, 5.0], [0.0, 0.0, 5.0]])
        np.testing.assert_allclose(corrs.pixels, fine.cam_px)
        np.testing.assert_allclose(corrs.weights, fine.confidence)

    def test_drops_missing_depth_and_off_image(self):
        valid = np.ones((480, 640), dtype=bool)
        valid[10, 10] = False
        depth = DepthMap(np.where(valid, 5.0, 0.0), valid)
        fine = fine_from([[10.0, 10.0], [20.0, 20.0], [30.0, 30.0]],
                         [[5.0, 5.0], [700.0, 5.0], [6.0, 6.0]])
        corrs = lift_matches(fine, depth, K, K_cam=K)
        assert corrs.source.tolist() == [2]
        assert corrs.dropped == 2

    def test_filled_depths_are_flagged(self):
        valid = np.zeros((480, 640), dtype=bool)
        valid[100, 100] = True
        depth = fill_depth_nearest(DepthMap(np.where(valid, 7.0, 0.0), valid), 3)
        fine = fine_from([[100.0, 100.0], [102.0, 100.0]], [[5.0, 5.0], [6.0, 6.0]])
        corrs = lift_matches(fine, depth, K)
        assert corrs.filled.tolist() == [False, True]
        np.testing.assert_allclose(corrs.points3d[:, 2], [7.0, 7.0])
