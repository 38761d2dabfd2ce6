"""
Workflow nodes
"""

import numpy as np
import pytest
import torch

from lidarcam_reg import NODE_CLASS_MAPPINGS, NODE_DISPLAY_NAME_MAPPINGS
from lidarcam_reg.evaluation import pose_errors
from lidarcam_reg.geometry import CameraIntrinsics, RigidTransform
from lidarcam_reg.geometry.formats import parse_pose, read_pose, write_pose
from lidarcam_reg.nodes import LidarCameraCalibration, LidarIntensityProjection
from lidarcam_reg.pipeline import write_scene_dir
from lidarcam_reg.scene import generate_scene, street_scene_config
from lidarcam_reg.utils.image_utils import gray2pil, load_gray, pil2tensor


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    config = street_scene_config()
    config.points = 4000
    config.intrinsics = CameraIntrinsics(130.0, 130.0, 80.0, 60.0, 160, 120)
    return write_scene_dir(generate_scene(2, config), tmp_path_factory.mktemp("nodes") / "2")


def image_tensor(h: int, w: int) -> torch.Tensor:
    return torch.rand(1, h, w, 3, generator=torch.Generator().manual_seed(0))


def test_mappings_are_consistent():
    assert set(NODE_CLASS_MAPPINGS) == set(NODE_DISPLAY_NAME_MAPPINGS)
    for cls in NODE_CLASS_MAPPINGS.values():
        assert hasattr(cls, cls.FUNCTION)
        assert len(cls.RETURN_TYPES) == len(cls.RETURN_NAMES)
        assert "required" in cls.INPUT_TYPES()


class TestProjectionNode:

    def test_project(self, scene_dir):
        intensity, depth, info = LidarIntensityProjection().project(
            str(scene_dir / "cloud.bin"), str(scene_dir / "gt_pose.txt"),
            str(scene_dir / "intrinsics.txt"), "intensity")
        assert intensity.shape == (1, 120, 160, 3) and depth.shape == (1, 120, 160, 3)
        assert intensity.dtype == torch.float32
        assert 0.0 <= float(intensity.min()) and float(intensity.max()) <= 1.0
        status, size, covered, mode = info.split("|")
        assert (status, size, mode) == ("success", "160x120", "intensity")
        assert int(covered.split()[0]) > 0

    def test_missing_file_becomes_error_image(self, tmp_path):
        intensity, depth, info = LidarIntensityProjection().project(
            str(tmp_path / "none.bin"), "p.txt", "k.txt", "depth")
        assert info.startswith("error|FileNotFoundError|")
        assert intensity.shape == (1, 512, 512, 3)
        assert torch.equal(intensity, depth)


class TestCalibrationNode:

    def test_inputs(self):
        required = LidarCameraCalibration.INPUT_TYPES()["required"]
        assert required["window"][1]["step"] == 2
        assert required["weights_path"][1]["default"] == ""

    def test_size_mismatch(self, scene_dir):
        overlay, pose, info = LidarCameraCalibration().calibrate(
            image_tensor(60, 80), str(scene_dir / "cloud.bin"), str(scene_dir / "intrinsics.txt"),
            str(scene_dir / "gt_pose.txt"), "", 0.05, 5, 0)
        assert info.startswith("error|DimensionMismatch|")
        assert pose == "" and overlay.shape == (1, 512, 512, 3)

    def test_registration_failure_is_reported(self, scene_dir, tmp_path):
        backwards = RigidTransform.from_yaw_pitch_roll(180.0) @ read_pose(scene_dir / "gt_pose.txt")
        write_pose(tmp_path / "init.txt", backwards)
        _, pose, info = LidarCameraCalibration().calibrate(
            image_tensor(120, 160), str(scene_dir / "cloud.bin"), str(scene_dir / "intrinsics.txt"),
            str(tmp_path / "init.txt"), "", 0.05, 5, 0)
        assert info.startswith("error|EmptyProjection|") and pose == ""

    @pytest.mark.slow
    def test_calibrate_camera_image(self, tmp_path):
        scene = generate_scene(4)
        scene_dir = write_scene_dir(scene, tmp_path / "4")
        camera = pil2tensor(gray2pil(load_gray(scene_dir / "camera.png")))
        overlay, pose, info = LidarCameraCalibration().calibrate(
            camera, str(scene_dir / "cloud.bin"), str(scene_dir / "intrinsics.txt"),
            str(scene_dir / "gt_pose.txt"), "", 0.2, 5, 0)
        assert info.split("|")[0] == "success", info
        assert overlay.shape == (1, 240, 320, 3)
        errors = pose_errors(parse_pose(pose), scene.gt_extrinsics)
        assert errors.e_r < 0.5 and errors.e_t < 0.05
