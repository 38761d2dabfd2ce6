"""
LiDAR-Camera Calibration Node
Estimates the extrinsics between a point cloud and a camera image
"""

import logging

from ...config import RunConfig
from ...errors import DimensionMismatch
from ...features.weights import load_model_weights
from ...geometry.formats import format_pose, read_intrinsics, read_pose, read_velodyne_bin
from ...pipeline.calibrate import calibrate, render_pose_overlay
from ...utils.image_utils import create_error_image, pil2tensor, tensor2gray

logger = logging.getLogger(__name__)


class LidarCameraCalibration:
    """
    Full registration: projection, matching, refinement and RANSAC-EPnP
    An empty weights path selects the hand-crafted features
    """

    def __init__(self):
        self._weights_path = None
        self._weights = None

    @classmethod
    def INPUT_TYPES(cls):
        return {
            "required": {
                "image": ("IMAGE",),
                "cloud_path": ("STRING", {"default": "cloud.bin", "multiline": False}),
                "intrinsics_path": ("STRING", {"default": "intrinsics.txt", "multiline": False}),
                "init_pose_path": ("STRING", {"default": "init_pose.txt", "multiline": False}),
                "weights_path": ("STRING", {"default": "", "multiline": False}),
                "theta_c": ("FLOAT", {"default": 0.05, "min": 0.001, "max": 0.999, "step": 0.001}),
                "window": ("INT", {"default": 5, "min": 3, "max": 15, "step": 2}),
                "seed": ("INT", {"default": 0, "min": 0, "max": 0xFFFFFFFF}),
            }
        }

    RETURN_TYPES = ("IMAGE", "STRING", "STRING")
    RETURN_NAMES = ("overlay", "pose", "info")
    FUNCTION = "calibrate"
    CATEGORY = "LidarCam/Calibration"

    def _load_weights(self, weights_path: str):
        # reuse the parsed file while the path is unchanged
        if weights_path != self._weights_path:
            self._weights = load_model_weights(weights_path)
            self._weights_path = weights_path
        return self._weights

    def calibrate(self, image, cloud_path, intrinsics_path, init_pose_path, weights_path,
                  theta_c, window, seed):
        """Run the calibration; failures become an error image"""
        try:
            camera = tensor2gray(image)
            cloud = read_velodyne_bin(cloud_path)
            K = read_intrinsics(intrinsics_path)
            if camera.shape != K.shape:
                raise DimensionMismatch(f"image is {camera.shape[1]}x{camera.shape[0]}, "
                                        f"intrinsics describe {K.width}x{K.height}")
            init_pose = read_pose(init_pose_path)

            learned = bool(weights_path.strip())
            config = RunConfig().with_values({
                "theta_c": theta_c,
                "window": window,
                "seed": seed,
                "feature_mode": "learned" if learned else "handcrafted",
            })
            weights = self._load_weights(weights_path.strip()) if learned else None

            logger.info("Calibrating %s (theta_c=%g, window=%d)", cloud_path, theta_c, window)
            result = calibrate(cloud, camera, K, init_pose, config, weights)
            overlay = render_pose_overlay(cloud, result.pose, result.matching.camera, result.matching.K)
            est = result.estimate
            info = (f"success|{len(result.matching.fine)} matches|{est.inlier_count} inliers|"
                    f"{est.mean_reprojection_error:.3f} px")
            logger.info("✓ Calibration done: %d inliers", est.inlier_count)
            return (pil2tensor(overlay), format_pose(result.pose).strip(), info)

        except Exception as e:
            logger.error("Calibration error: %s", e)
            error_tensor = pil2tensor(create_error_image(512, 512, f"Calibration: {str(e)[:30]}"))
            return (error_tensor, "", f"error|{type(e).__name__}|{e}")


NODE_CLASS_MAPPINGS = {
    "LidarCameraCalibration": LidarCameraCalibration,
}

NODE_DISPLAY_NAME_MAPPINGS = {
    "LidarCameraCalibration": "LiDAR-Camera Calibration",
}
