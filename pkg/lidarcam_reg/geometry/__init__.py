# geometry_core: transforms, camera model, rasters and file formats
from .transforms import RigidTransform, axis_rotation, compose, invert, apply, orthonormalize
from .camera import (
    CameraIntrinsics, PointCloud4D, GrayImage, IntensityImage, DepthMap,
    Rasterization, project, project_points, rasterize, back_project, round_half_up,
)
from .raster import fill_nearest, fill_depth_nearest, densify_intensity, resize_long_side

__all__ = [
    'RigidTransform', 'axis_rotation', 'compose', 'invert', 'apply', 'orthonormalize',
    'CameraIntrinsics', 'PointCloud4D', 'GrayImage', 'IntensityImage', 'DepthMap',
    'Rasterization', 'project', 'project_points', 'rasterize', 'back_project', 'round_half_up',
    'fill_nearest', 'fill_depth_nearest', 'densify_intensity', 'resize_long_side',
]
