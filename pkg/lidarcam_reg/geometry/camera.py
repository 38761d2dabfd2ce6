"""
Pinhole camera model, LiDAR clouds and image rasters
Projection of 4D point clouds into virtual intensity images and depth maps
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from ..errors import EmptyProjection, InvalidConfig, NonPositiveDepth
from .transforms import RigidTransform

logger = logging.getLogger(__name__)

PROJECTION_MODES = ("intensity", "depth")


def round_half_up(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from -inf (platform independent)"""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidConfig(f"focal lengths must be positive (fx={self.fx}, fy={self.fy})")
        if self.width <= 0 or self.height <= 0:
            raise InvalidConfig(f"image size must be positive ({self.width}x{self.height})")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidConfig(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def shape(self) -> Tuple[int, int]:
        """(height, width)"""
        return self.height, self.width

    def scaled(self, scale: float, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics of the same camera after a uniform image resize"""
        return CameraIntrinsics(
            fx=self.fx * scale,
            fy=self.fy * scale,
            cx=min(self.cx * scale, width - 1e-9),
            cy=min(self.cy * scale, height - 1e-9),
            width=int(width),
            height=int(height),
        )

    def contains(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Real pixel coordinates inside the image extent"""
        return (u >= 0) & (u <= self.width - 1) & (v >= 0) & (v <= self.height - 1)


@dataclass(frozen=True)
class PointCloud4D:
    """N×4 array of (x, y, z, intensity); intensity normalized to [0, 1]"""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise InvalidConfig(f"point cloud must be N x 4, got {pts.shape}")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_raw(cls, raw: np.ndarray, normalize: bool = True) -> "PointCloud4D":
        """
        Build a cloud from raw sensor returns

        Args:
            raw: N×4 array (x, y, z, raw intensity)
            normalize: min-max normalize intensity to [0, 1] over this cloud

        Returns:
            PointCloud4D without non-finite rows
        """
        pts = np.asarray(raw, dtype=np.float64).reshape(-1, 4)
        finite = np.all(np.isfinite(pts), axis=1)
        if not np.all(finite):
            logger.warning("⚠️ Dropping %d non-finite returns", int(np.sum(~finite)))
            pts = pts[finite]
        pts = pts.copy()
        if normalize and len(pts):
            lo, hi = pts[:, 3].min(), pts[:, 3].max()
            pts[:, 3] = (pts[:, 3] - lo) / (hi - lo) if hi > lo else 0.0
        return cls(pts)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class IntensityImage:
    pixels: np.ndarray
    valid: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class DepthMap:
    """Depths in meters; 0 where missing. `filled` marks borrowed depths."""

    depths: np.ndarray
    valid: np.ndarray
    filled: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.filled is None:
            object.__setattr__(self, "filled", np.zeros_like(self.valid, dtype=bool))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.depths.shape

    def scaled(self, factor: float) -> "DepthMap":
        return replace(self, depths=self.depths * factor)


@dataclass(frozen=True)
class Rasterization:
    """Full result of rasterizing a cloud: images plus per-pixel provenance"""

    intensity: IntensityImage
    depth: DepthMap
    source_index: np.ndarray  # H×W index of the winning point, -1 if empty
    uv: np.ndarray  # N×2 continuous pixel coordinates of every point
    z: np.ndarray  # N camera-frame depths


def project_points(
    xyz: np.ndarray, pose: RigidTransform, K: CameraIntrinsics
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Continuous pinhole projection

    Returns:
        (uv N×2, z N); uv is NaN for points with z ≤ 0
    """
    cam = pose.apply(np.asarray(xyz, dtype=np.float64).reshape(-1, 3))
    z = cam[:, 2]
    uv = np.full((len(cam), 2), np.nan)
    front = z > 0
    uv[front, 0] = K.fx * cam[front, 0] / z[front] + K.cx
    uv[front, 1] = K.fy * cam[front, 1] / z[front] + K.cy
    return uv, z


def rasterize(
    cloud: PointCloud4D,
    pose: RigidTransform,
    K: CameraIntrinsics,
    mode: str = "intensity",
) -> Rasterization:
    """
    Z-buffered rasterization of a cloud seen through (pose, K)

    Args:
        cloud: LiDAR returns
        pose: maps cloud coordinates into the camera frame
        K: target intrinsics
        mode: 'intensity' stores reflectance, 'depth' stores normalized
            inverse depth (min depth / depth) in the image channel

    Returns:
        Rasterization; raises EmptyProjection if nothing lands in the image
    """
    if mode not in PROJECTION_MODES:
        raise InvalidConfig(f"projection mode must be one of {PROJECTION_MODES}, got {mode!r}")
    if len(cloud) == 0:
        raise EmptyProjection("point cloud is empty")

    uv, z = project_points(cloud.xyz, pose, K)
    front = z > 0
    u = np.zeros(len(z), dtype=np.int64)
    v = np.zeros(len(z), dtype=np.int64)
    u[front] = round_half_up(uv[front, 0])
    v[front] = round_half_up(uv[front, 1])
    keep = front & (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)
    if not np.any(keep):
        raise EmptyProjection("no point projects inside the image")

    idx = np.flatnonzero(keep)
    flat = v[idx] * K.width + u[idx]
    # primary key pixel, then depth, then original order
    order = np.lexsort((idx, z[idx], flat))
    flat_sorted = flat[order]
    _, first = np.unique(flat_sorted, return_index=True)
    winners = idx[order[first]]
    pixels = flat_sorted[first]

    h, w = K.height, K.width
    depths = np.zeros(h * w)
    values = np.zeros(h * w)
    valid = np.zeros(h * w, dtype=bool)
    source = np.full(h * w, -1, dtype=np.int64)
    depths[pixels] = z[winners]
    valid[pixels] = True
    source[pixels] = winners
    if mode == "intensity":
        values[pixels] = np.clip(cloud.intensity[winners], 0.0, 1.0)
    else:
        values[pixels] = z[winners].min() / z[winners]

    logger.debug("Rasterized %d/%d points into %dx%d", len(winners), len(cloud), w, h)
    valid = valid.reshape(h, w)
    return Rasterization(
        intensity=IntensityImage(values.reshape(h, w), valid),
        depth=DepthMap(depths.reshape(h, w), valid.copy()),
        source_index=source.reshape(h, w),
        uv=uv,
        z=z,
    )


def project(
    cloud: PointCloud4D,
    pose: RigidTransform,
    K: CameraIntrinsics,
    mode: str = "intensity",
) -> Tuple[IntensityImage, DepthMap]:
    """Project a cloud into a virtual intensity image and depth map"""
    raster = rasterize(cloud, pose, K, mode)
    return raster.intensity, raster.depth


def back_project(u, v, depth, K: CameraIntrinsics) -> np.ndarray:
    """
    Lift pixel(s) with depth into camera-frame 3D points

    Scalars give a 3-vector; arrays of length N give an N×3 array.
    """
    d = np.asarray(depth, dtype=np.float64)
    if np.any(~(d > 0)):
        raise NonPositiveDepth(f"depth must be > 0, got min {np.min(d)}")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    x = d * (u - K.cx) / K.fx
    y = d * (v - K.cy) / K.fy
    return np.stack([x, y, d * np.ones_like(x)], axis=-1)
