"""
Synthetic scenes, the counter-based generator and pose perturbations
"""

import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lidarcam_reg.errors import InvalidConfig
from lidarcam_reg.evaluation.metrics import rotation_angle
from lidarcam_reg.geometry import CameraIntrinsics, RigidTransform
from lidarcam_reg.scene import (
    Box, Plane, PerturbationSpec, SplitMix64, cast_rays, generate_scene, sample_perturbation,
    sample_perturbations, street_scene_config,
)


@pytest.fixture(scope="module")
def small_config():
    config = street_scene_config()
    config.points = 6000
    config.intrinsics = CameraIntrinsics(130.0, 130.0, 80.0, 60.0, 160, 120)
    return config


@pytest.fixture(scope="module")
def scene(small_config):
    return generate_scene(11, small_config)


class TestSplitMix64:

    def test_reference_stream(self):
        values = SplitMix64(0).next_u64(2)
        assert [int(v) for v in values] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4]

    def test_counter_advances(self):
        a, b = SplitMix64(5), SplitMix64(5)
        joint = a.next_u64(4)
        split = np.concatenate([b.next_u64(1), b.next_u64(3)])
        np.testing.assert_array_equal(joint, split)

    @given(st.integers(0, 2**64 - 1))
    def test_random_in_unit_interval(self, seed):
        u = SplitMix64(seed).random(64)
        assert np.all(u >= 0.0) and np.all(u < 1.0)

    def test_forks_are_named_substreams(self):
        rng = SplitMix64(3)
        np.testing.assert_array_equal(rng.fork("rays").random(8), SplitMix64(3).fork("rays").random(8))
        assert not np.array_equal(rng.fork("rays").random(8), rng.fork("noise").random(8))
        assert not np.array_equal(rng.fork(1).random(8), rng.fork(2).random(8))

    @given(st.integers(0, 2**32), st.integers(1, 50), st.data())
    def test_sample_distinct(self, seed, population, data):
        k = data.draw(st.integers(0, population))
        out = SplitMix64(seed).sample_distinct(population, k)
        assert len(set(out.tolist())) == k
        assert np.all((out >= 0) & (out < population))

    def test_sample_distinct_too_many(self):
        with pytest.raises(ValueError):
            SplitMix64(0).sample_distinct(3, 4)


class TestCastRays:

    def test_plane_hit_distance(self):
        wall = Plane((0.0, 0.0, 10.0), (0.0, 0.0, -1.0), 5.0, 5.0, 0.5, 0.5)
        t, refl, normals = cast_rays([wall], 0, 0.5, np.zeros(3), np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]))
        assert t[0] == pytest.approx(10.0)
        assert refl[0] == pytest.approx(0.5)
        np.testing.assert_allclose(normals[0], [0.0, 0.0, -1.0])
        assert np.isinf(t[1])

    def test_box_occludes_plane(self):
        wall = Plane((0.0, 0.0, 10.0), (0.0, 0.0, -1.0), 5.0, 5.0, 0.2, 0.2)
        box = Box((-1.0, -1.0, 4.0), (1.0, 1.0, 6.0), 0.9, 0.9)
        t, refl, normals = cast_rays([wall, box], 0, 0.5, np.zeros(3), np.array([[0.0, 0.0, 1.0]]))
        assert t[0] == pytest.approx(4.0)
        assert refl[0] == pytest.approx(0.9)
        np.testing.assert_allclose(normals[0], [0.0, 0.0, -1.0])


class TestGenerateScene:

    def test_deterministic(self, small_config, scene):
        again = generate_scene(11, small_config)
        np.testing.assert_array_equal(again.cloud.points, scene.cloud.points)
        np.testing.assert_array_equal(again.camera_image.pixels, scene.camera_image.pixels)

    def test_seed_changes_scene(self, small_config, scene):
        other = generate_scene(12, small_config)
        assert not np.array_equal(other.camera_image.pixels, scene.camera_image.pixels)

    def test_ranges(self, scene):
        assert scene.cloud.intensity.min() >= 0.0 and scene.cloud.intensity.max() <= 1.0
        assert scene.camera_image.shape == scene.intrinsics.shape
        assert 0.0 <= scene.camera_image.pixels.min() and scene.camera_image.pixels.max() <= 1.0

    def test_camera_depth_matches_ray_casting(self, scene):
        rendered = scene.render_depth(scene.gt_extrinsics, scene.intrinsics)
        np.testing.assert_array_equal(rendered.valid, scene.camera_depth.valid)
        np.testing.assert_allclose(rendered.depths, scene.camera_depth.depths)

    def test_lidar_points_lie_on_the_surface(self, scene):
        xyz = scene.cloud.xyz[:200]
        dist = np.linalg.norm(xyz, axis=1)
        t, _, _ = scene.cast(np.zeros(3), xyz / dist[:, None])
        # rays grazing an edge may slip past it
        assert np.mean(np.isclose(t, dist, rtol=1e-9)) > 0.98

    def test_needs_primitives(self):
        config = street_scene_config()
        config.primitives = []
        with pytest.raises(InvalidConfig):
            generate_scene(0, config)

    def test_camera_facing_away(self, small_config):
        backwards = dataclasses.replace(
            small_config, gt_extrinsics=RigidTransform.from_yaw_pitch_roll(180.0)
        )
        with pytest.raises(InvalidConfig, match="frustum"):
            generate_scene(0, backwards)


class TestPerturbations:

    @given(st.floats(0.0, 3.0), st.floats(0.0, 30.0), st.integers(0, 2**32))
    def test_within_bounds(self, max_t, max_r, seed):
        spec = PerturbationSpec(max_t, max_r, seed)
        for p in sample_perturbations(spec, 10):
            assert np.linalg.norm(p.translation) <= max_t + 1e-12
            assert p.translation[1] == 0.0
            assert rotation_angle(p.rotation) <= max_r + 1e-6
            # rotation about the up axis only
            np.testing.assert_allclose(p.rotation[1], [0.0, 1.0, 0.0], atol=1e-12)

    def test_zero_bounds_give_identity(self):
        for p in sample_perturbations(PerturbationSpec(0.0, 0.0, 4), 3):
            assert p.allclose(RigidTransform.identity())

    def test_deterministic_prefix(self):
        spec = PerturbationSpec(1.0, 10.0, 21)
        first = sample_perturbations(spec, 5)
        assert all(a.allclose(b) for a, b in zip(first, sample_perturbations(spec, 5)))
        assert sample_perturbation(spec).allclose(first[0])

    def test_negative_bound(self):
        with pytest.raises(InvalidConfig):
            PerturbationSpec(-1.0, 5.0)
