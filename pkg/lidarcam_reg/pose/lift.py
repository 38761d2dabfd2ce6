"""
Lifting refined matches to 3D-2D correspondences
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..geometry.camera import CameraIntrinsics, DepthMap, back_project, round_half_up
from ..geometry.transforms import RigidTransform
from ..matching.refine import FineMatchSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Correspondences:
    """
    3D points (LiDAR frame, meters) paired with camera pixels

    filled marks points whose depth was borrowed by nearest filling;
    source maps each row back to its refined match; dropped counts
    matches without depth or outside the camera image.
    """

    points3d: np.ndarray
    pixels: np.ndarray
    weights: np.ndarray
    filled: np.ndarray
    source: np.ndarray
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.points3d)

    @classmethod
    def from_arrays(cls, points3d: np.ndarray, pixels: np.ndarray,
                    weights: Optional[np.ndarray] = None) -> "Correspondences":
        pts = np.asarray(points3d, dtype=np.float64).reshape(-1, 3)
        n = len(pts)
        return cls(
            points3d=pts,
            pixels=np.asarray(pixels, dtype=np.float64).reshape(-1, 2),
            weights=np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64),
            filled=np.zeros(n, dtype=bool),
            source=np.arange(n),
        )

    def subset(self, mask: np.ndarray) -> "Correspondences":
        return Correspondences(self.points3d[mask], self.pixels[mask], self.weights[mask],
                               self.filled[mask], self.source[mask], self.dropped)


def lift_matches(
    fine: FineMatchSet,
    d_filled: DepthMap,
    K_lidar: CameraIntrinsics,
    view_pose: Optional[RigidTransform] = None,
    K_cam: Optional[CameraIntrinsics] = None,
) -> Correspondences:
    """
    Back-project each match's lidar-side pixel with its (possibly filled) depth

    Args:
        fine: refined matches
        d_filled: lidar-view depth after fill_depth_nearest
        K_lidar: intrinsics of the lidar view
        view_pose: LiDAR frame -> lidar-view frame; points are returned in
            the LiDAR frame when given, in the lidar-view frame otherwise
        K_cam: camera intrinsics; matches whose camera pixel falls outside are dropped

    Returns:
        Correspondences in match order
    """
    px = np.asarray(fine.lidar_px, dtype=np.float64).reshape(-1, 2)
    h, w = d_filled.shape
    u = round_half_up(px[:, 0])
    v = round_half_up(px[:, 1])
    inside = (u >= 0) & (u < w) & (v >= 0) & (v < h)
    has_depth = np.zeros(len(px), dtype=bool)
    has_depth[inside] = d_filled.valid[v[inside], u[inside]] & (d_filled.depths[v[inside], u[inside]] > 0)
    keep = has_depth.copy()
    if K_cam is not None:
        keep &= K_cam.contains(fine.cam_px[:, 0], fine.cam_px[:, 1])

    idx = np.flatnonzero(keep)
    dropped = len(px) - len(idx)
    if dropped:
        logger.debug("⚠️ %d/%d matches dropped while lifting (no depth or off-image)", dropped, len(px))
    points = back_project(px[idx, 0], px[idx, 1], d_filled.depths[v[idx], u[idx]], K_lidar).reshape(-1, 3)
    if view_pose is not None:
        points = view_pose.inverse().apply(points).reshape(-1, 3)
    filled = d_filled.filled[v[idx], u[idx]].astype(bool)
    return Correspondences(
        points3d=points,
        pixels=np.asarray(fine.cam_px, dtype=np.float64)[idx].reshape(-1, 2),
        weights=np.asarray(fine.confidence, dtype=np.float64)[idx],
        filled=filled,
        source=idx,
        dropped=dropped,
    )
