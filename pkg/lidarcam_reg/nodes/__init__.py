# Workflow nodes
from .projection.projection_node import LidarIntensityProjection
from .calibration.calibration_node import LidarCameraCalibration

NODE_CLASS_MAPPINGS = {
    "LidarIntensityProjection": LidarIntensityProjection,
    "LidarCameraCalibration": LidarCameraCalibration,
}

NODE_DISPLAY_NAME_MAPPINGS = {
    "LidarIntensityProjection": "LiDAR Intensity Projection",
    "LidarCameraCalibration": "LiDAR-Camera Calibration",
}

__all__ = ['NODE_CLASS_MAPPINGS', 'NODE_DISPLAY_NAME_MAPPINGS',
           'LidarIntensityProjection', 'LidarCameraCalibration']
