"""
LiDAR Intensity Projection Node
Renders a point cloud into a virtual camera view
"""

import logging

import numpy as np
from PIL import Image

from ...geometry.camera import PROJECTION_MODES, GrayImage, project
from ...geometry.formats import read_intrinsics, read_pose, read_velodyne_bin
from ...utils.image_utils import colorize, create_error_image, gray2pil, pil2tensor

logger = logging.getLogger(__name__)


def depth_preview(depths: np.ndarray, valid: np.ndarray) -> Image.Image:
    """Depth colour ramp, black where no point landed"""
    rgb = np.zeros(depths.shape + (3,), dtype=np.uint8)
    if np.any(valid):
        rgb[valid] = colorize(depths[valid], 0.0, float(depths[valid].max()))
    return Image.fromarray(rgb)


class LidarIntensityProjection:
    """
    Project a KITTI-style binary cloud through a pose and intrinsics
    Outputs the intensity image and a depth preview
    """

    @classmethod
    def INPUT_TYPES(cls):
        return {
            "required": {
                "cloud_path": ("STRING", {"default": "cloud.bin", "multiline": False}),
                "pose_path": ("STRING", {"default": "gt_pose.txt", "multiline": False}),
                "intrinsics_path": ("STRING", {"default": "intrinsics.txt", "multiline": False}),
                "mode": (list(PROJECTION_MODES), {"default": "intensity"}),
            }
        }

    RETURN_TYPES = ("IMAGE", "IMAGE", "STRING")
    RETURN_NAMES = ("intensity", "depth", "info")
    FUNCTION = "project"
    CATEGORY = "LidarCam/Projection"

    def project(self, cloud_path, pose_path, intrinsics_path, mode):
        """Project the cloud; failures become an error image"""
        try:
            cloud = read_velodyne_bin(cloud_path)
            pose = read_pose(pose_path)
            K = read_intrinsics(intrinsics_path)
            image, depth = project(cloud, pose, K, mode)

            intensity_tensor = pil2tensor(gray2pil(GrayImage(image.pixels)))
            depth_tensor = pil2tensor(depth_preview(depth.depths, depth.valid))
            covered = int(image.valid.sum())
            info = f"success|{K.width}x{K.height}|{covered} pixels|{mode}"
            logger.info("✓ Projected %d points onto %d pixels", len(cloud), covered)
            return (intensity_tensor, depth_tensor, info)

        except Exception as e:
            logger.error("Projection error: %s", e)
            error_tensor = pil2tensor(create_error_image(512, 512, f"Projection: {str(e)[:30]}"))
            return (error_tensor, error_tensor.clone(), f"error|{type(e).__name__}|{e}")


NODE_CLASS_MAPPINGS = {
    "LidarIntensityProjection": LidarIntensityProjection,
}

NODE_DISPLAY_NAME_MAPPINGS = {
    "LidarIntensityProjection": "LiDAR Intensity Projection",
}
