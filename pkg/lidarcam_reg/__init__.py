"""
lidarcam_reg
Targetless LiDAR-camera extrinsic calibration by coarse-to-fine point-pixel matching

Pipeline: project the cloud into a virtual intensity image, match it against
the camera image (Dual-Softmax with repeatability, sub-pixel refinement),
lift matches to 3D and solve RANSAC-EPnP.
"""

__version__ = "0.3.0"

from .nodes import NODE_CLASS_MAPPINGS, NODE_DISPLAY_NAME_MAPPINGS

__all__ = ['__version__', 'NODE_CLASS_MAPPINGS', 'NODE_DISPLAY_NAME_MAPPINGS']
