"""
Ground truth for supervision: coarse matches and binary repeatability maps
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..geometry.camera import CameraIntrinsics, DepthMap, back_project, project_points, round_half_up
from ..geometry.transforms import RigidTransform

logger = logging.getLogger(__name__)

CELL = 8
DEFAULT_RHO = 8.0
DEFAULT_DELTA_D = 0.05


def coarse_grid(shape: Tuple[int, int]) -> Tuple[int, int]:
    """Coarse grid of an image padded to multiples of 8"""
    h, w = shape
    return -(-h // CELL), -(-w // CELL)


@dataclass(frozen=True)
class GtRepeatabilityMap:
    labels: np.ndarray  # (H/8)×(W/8) uint8 in {0, 1}
    delta_d: float

    @property
    def flat(self) -> np.ndarray:
        return self.labels.reshape(-1)

    def __len__(self) -> int:
        return self.labels.size


@dataclass(frozen=True)
class GtMatchSet:
    """One-to-one coarse pairs whose reprojection lands within rho of the camera cell centre"""

    lidar_index: np.ndarray
    cam_index: np.ndarray
    distance: np.ndarray
    rho: float
    lidar_grid: Tuple[int, int]
    cam_grid: Tuple[int, int]

    def __len__(self) -> int:
        return len(self.lidar_index)

    def pairs(self) -> set:
        return {(int(i), int(j)) for i, j in zip(self.lidar_index, self.cam_index)}


def _reproject(u: np.ndarray, v: np.ndarray, d_lidar: DepthMap, K: CameraIntrinsics,
               gt_pose: RigidTransform, K_cam: CameraIntrinsics):
    """Lift pixels with lidar-view depth and project them into the camera"""
    h, w = d_lidar.shape
    inside = (u < w) & (v < h)
    has_depth = np.zeros(len(u), dtype=bool)
    has_depth[inside] = d_lidar.valid[v[inside], u[inside]] & (d_lidar.depths[v[inside], u[inside]] > 0)
    idx = np.flatnonzero(has_depth)
    uv = np.full((len(u), 2), np.nan)
    z = np.zeros(len(u))
    if len(idx):
        pts = back_project(u[idx], v[idx], d_lidar.depths[v[idx], u[idx]], K)
        uv[idx], z[idx] = project_points(pts, gt_pose, K_cam)
    return has_depth & (z > 0), uv, z


def gt_repeatability(
    d_lidar: DepthMap,
    d_cam_gt: DepthMap,
    K: CameraIntrinsics,
    gt_pose: RigidTransform,
    delta_d: float = DEFAULT_DELTA_D,
    K_cam: Optional[CameraIntrinsics] = None,
) -> GtRepeatabilityMap:
    """
    Depth-consistency labels per lidar coarse cell

    The cell's top-left pixel is lifted with its lidar depth, moved into the
    camera by gt_pose and reprojected. Label 1 iff it lands inside the
    camera image and |z - d_cam| / d_cam <= delta_d at the landing pixel.
    """
    K_cam = K_cam or K
    rows, cols = coarse_grid(d_lidar.shape)
    r, c = np.divmod(np.arange(rows * cols), cols)
    ok, uv, z = _reproject(CELL * c, CELL * r, d_lidar, K, gt_pose, K_cam)

    labels = np.zeros(rows * cols, dtype=np.uint8)
    idx = np.flatnonzero(ok)
    ui, vi = round_half_up(uv[idx, 0]), round_half_up(uv[idx, 1])
    inside = (ui >= 0) & (ui < K_cam.width) & (vi >= 0) & (vi < K_cam.height)
    idx, ui, vi = idx[inside], ui[inside], vi[inside]
    d_cam = d_cam_gt.depths[vi, ui]
    seen = d_cam_gt.valid[vi, ui] & (d_cam > 0)
    consistent = np.zeros(len(idx), dtype=bool)
    consistent[seen] = np.abs(z[idx[seen]] - d_cam[seen]) <= delta_d * d_cam[seen]
    labels[idx[consistent]] = 1
    logger.debug("Repeatability ground truth: %d/%d cells visible", int(labels.sum()), labels.size)
    return GtRepeatabilityMap(labels.reshape(rows, cols), delta_d)


def gt_coarse_matches(
    d_lidar: DepthMap,
    K: CameraIntrinsics,
    gt_pose: RigidTransform,
    rho: float = DEFAULT_RHO,
    K_cam: Optional[CameraIntrinsics] = None,
    repeatability: Optional[GtRepeatabilityMap] = None,
) -> GtMatchSet:
    """
    Coarse matches from projecting lidar cell centres into the camera grid

    Args:
        d_lidar: depth of the lidar view (valid where a depth is known)
        K: lidar-view intrinsics
        gt_pose: lidar-view frame -> camera frame
        rho: reprojection threshold in pixels
        K_cam: camera intrinsics (default: K, a shared grid)
        repeatability: labels; cells labelled 0 (occluded) produce no pair

    Returns:
        GtMatchSet after mutual-nearest filtering on reprojection distance
    """
    K_cam = K_cam or K
    lidar_grid = coarse_grid(d_lidar.shape)
    cam_grid = coarse_grid(K_cam.shape)
    rows, cols = lidar_grid
    r, c = np.divmod(np.arange(rows * cols), cols)
    half = CELL // 2
    ok, uv, _ = _reproject(CELL * c + half, CELL * r + half, d_lidar, K, gt_pose, K_cam)
    if repeatability is not None:
        ok &= repeatability.flat.astype(bool)

    idx = np.flatnonzero(ok)
    u, v = uv[idx, 0], uv[idx, 1]
    inside = (u >= 0) & (u < K_cam.width) & (v >= 0) & (v < K_cam.height)
    idx, u, v = idx[inside], u[inside], v[inside]
    cc = np.floor(u / CELL).astype(np.int64)
    cr = np.floor(v / CELL).astype(np.int64)
    dist = np.hypot(u - (CELL * cc + half), v - (CELL * cr + half))
    near = dist < rho
    idx, cam, dist = idx[near], (cr * cam_grid[1] + cc)[near], dist[near]

    # keep, per camera cell, the closest lidar cell (lowest index on ties)
    order = np.lexsort((idx, dist, cam))
    _, first = np.unique(cam[order], return_index=True)
    keep = np.sort(order[first])
    logger.debug("Coarse ground truth: %d pairs from %d candidate cells", len(keep), len(idx))
    return GtMatchSet(idx[keep], cam[keep], dist[keep], rho, lidar_grid, cam_grid)


def gt_fine_targets(
    lidar_px: np.ndarray,
    d_lidar: DepthMap,
    K: CameraIntrinsics,
    gt_pose: RigidTransform,
    K_cam: Optional[CameraIntrinsics] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Camera pixels the lidar-side pixels truly correspond to

    Returns:
        (targets N×2, mask of targets that have depth and land in front of the camera)
    """
    K_cam = K_cam or K
    px = np.asarray(lidar_px, dtype=np.float64).reshape(-1, 2)
    u = np.clip(round_half_up(px[:, 0]), 0, d_lidar.shape[1] - 1)
    v = np.clip(round_half_up(px[:, 1]), 0, d_lidar.shape[0] - 1)
    ok, _, _ = _reproject(u, v, d_lidar, K, gt_pose, K_cam)
    # lift the exact sub-pixel position with the looked-up depth
    idx = np.flatnonzero(ok)
    targets = np.full_like(px, np.nan)
    if len(idx):
        pts = back_project(px[idx, 0], px[idx, 1], d_lidar.depths[v[idx], u[idx]], K)
        targets[idx], z = project_points(pts, gt_pose, K_cam)
        ok[idx] &= z > 0
    return targets, ok & np.all(np.isfinite(targets), axis=1)
