"""
Synthetic LiDAR/camera scenes built from textured planes and boxes
Frame convention: X right, Y down (Y is the up/down axis), Z forward;
the ground plane is the XZ plane
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import InvalidConfig
from ..geometry.camera import (
    CameraIntrinsics,
    DepthMap,
    GrayImage,
    PointCloud4D,
    project_points,
)
from ..geometry.transforms import RigidTransform
from .prng import SplitMix64, hash_ints

logger = logging.getLogger(__name__)

MIN_FRUSTUM_FRACTION = 0.30


@dataclass(frozen=True)
class Plane:
    """Finite textured rectangle: centre, unit normal and half extents"""

    center: Tuple[float, float, float]
    normal: Tuple[float, float, float]
    half_u: float
    half_v: float
    reflectance: float
    stripe_reflectance: float


@dataclass(frozen=True)
class Box:
    """Axis-aligned box between two corners"""

    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]
    reflectance: float
    stripe_reflectance: float


Primitive = Union[Plane, Box]


@dataclass
class SceneConfig:
    points: int = 30000
    primitives: List[Primitive] = field(default_factory=list)
    stripe_period: float = 0.5
    range_noise: float = 0.0
    beams: int = 64
    elevation_range: Tuple[float, float] = (-24.0, 4.0)
    azimuth_fov: float = 100.0
    max_range: float = 100.0
    layout_jitter: float = 0.0
    shading: float = 0.0
    gt_extrinsics: RigidTransform = field(
        default_factory=lambda: RigidTransform.from_yaw_pitch_roll(
            0.3, 0.5, 0.0, translation=(0.0, -0.08, -0.27)
        )
    )
    intrinsics: CameraIntrinsics = field(
        default_factory=lambda: CameraIntrinsics(260.0, 260.0, 160.0, 120.0, 320, 240)
    )

    def validate(self) -> None:
        if not self.primitives:
            raise InvalidConfig("scene needs at least one primitive")
        if self.points <= 0:
            raise InvalidConfig(f"points must be positive, got {self.points}")
        if self.stripe_period <= 0:
            raise InvalidConfig(f"stripe_period must be positive, got {self.stripe_period}")
        if self.range_noise < 0 or self.layout_jitter < 0:
            raise InvalidConfig("range_noise and layout_jitter must be >= 0")
        if self.beams <= 0:
            raise InvalidConfig(f"beams must be positive, got {self.beams}")
        if not 0.0 <= self.shading <= 1.0:
            raise InvalidConfig(f"shading must lie in [0, 1], got {self.shading}")
        for prim in self.primitives:
            for r in (prim.reflectance, prim.stripe_reflectance):
                if not 0.0 <= r <= 1.0:
                    raise InvalidConfig(f"reflectance {r} outside [0, 1]")
            if isinstance(prim, Plane):
                if np.linalg.norm(prim.normal) == 0 or prim.half_u <= 0 or prim.half_v <= 0:
                    raise InvalidConfig(f"degenerate plane {prim}")
            elif np.any(np.asarray(prim.hi) <= np.asarray(prim.lo)):
                raise InvalidConfig(f"box corners must satisfy lo < hi: {prim}")


def street_scene_config() -> SceneConfig:
    """Street canyon: road with markings, two facades, an end wall and parked boxes"""
    return SceneConfig(
        primitives=[
            Plane((0.0, 1.7, 25.0), (0.0, -1.0, 0.0), 12.0, 25.0, 0.25, 0.9),
            Plane((-7.0, -1.0, 25.0), (1.0, 0.0, 0.0), 25.0, 3.0, 0.55, 0.1),
            Plane((7.0, -1.0, 25.0), (-1.0, 0.0, 0.0), 25.0, 3.0, 0.45, 0.8),
            Plane((0.0, -1.0, 45.0), (0.0, 0.0, -1.0), 7.0, 3.0, 0.65, 0.2),
            Box((-3.0, -0.3, 10.0), (-1.5, 1.7, 12.0), 0.75, 0.3),
            Box((1.5, -0.8, 16.0), (3.5, 1.7, 18.5), 0.35, 0.95),
            Box((-0.8, 0.6, 7.0), (0.6, 1.7, 8.0), 0.05, 0.6),
        ],
        layout_jitter=1.0,
    )


@dataclass
class SyntheticScene:
    cloud: PointCloud4D
    camera_image: GrayImage
    intrinsics: CameraIntrinsics
    gt_extrinsics: RigidTransform
    seed: int
    camera_depth: DepthMap
    primitives: List[Primitive]
    stripe_period: float
    intensity_range: Tuple[float, float]

    def cast(self, origins: np.ndarray, directions: np.ndarray):
        """Nearest hit along each ray: (t, reflectance, normal); t = inf on miss"""
        return cast_rays(self.primitives, self.seed, self.stripe_period, origins, directions)

    def render_depth(self, pose: RigidTransform, K: CameraIntrinsics) -> DepthMap:
        return render_depth(self, pose, K)


# Ray casting

def _plane_axes(normal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ref = np.array([0.0, 1.0, 0.0]) if abs(normal[1]) < 0.9 else np.array([0.0, 0.0, 1.0])
    u = np.cross(ref, normal)
    u /= np.linalg.norm(u)
    return u, np.cross(normal, u)


def _texture(seed: int, salt: int, s: np.ndarray, t: np.ndarray, period: float,
             base: float, stripe: float, face: Optional[np.ndarray] = None) -> np.ndarray:
    """Aperiodic plaid: hashed stripe bits along both surface axes"""
    ks = np.floor(s / period).astype(np.int64)
    kt = np.floor(t / (1.7 * period)).astype(np.int64)
    if face is not None:
        ks = ks * 3 + face
        kt = kt * 3 + face
    bit_s = (hash_ints(seed, ks, salt) >> np.uint64(7)) & np.uint64(1)
    bit_t = (hash_ints(seed, kt, salt + 101) >> np.uint64(7)) & np.uint64(1)
    level = (bit_s + bit_t).astype(np.float64) / 2.0
    return base + (stripe - base) * level


def _intersect_plane(prim: Plane, salt: int, seed: int, period: float,
                     origins: np.ndarray, dirs: np.ndarray):
    n = np.asarray(prim.normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    c = np.asarray(prim.center, dtype=np.float64)
    u_axis, v_axis = _plane_axes(n)
    denom = dirs @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((c - origins) @ n) / denom
    t = np.where(np.abs(denom) > 1e-12, t, np.inf)
    t = np.where(t > 1e-9, t, np.inf)
    hit = origins + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
    s = (hit - c) @ u_axis
    q = (hit - c) @ v_axis
    inside = (np.abs(s) <= prim.half_u) & (np.abs(q) <= prim.half_v)
    t = np.where(inside, t, np.inf)
    refl = _texture(seed, salt, s, q, period, prim.reflectance, prim.stripe_reflectance)
    normals = np.broadcast_to(n, dirs.shape)
    return t, refl, normals


def _intersect_box(prim: Box, salt: int, seed: int, period: float,
                   origins: np.ndarray, dirs: np.ndarray):
    lo = np.asarray(prim.lo, dtype=np.float64)
    hi = np.asarray(prim.hi, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo - origins) * inv
        t2 = (hi - origins) * inv
    t1 = np.where(np.isnan(t1), -np.inf, t1)
    t2 = np.where(np.isnan(t2), np.inf, t2)
    tmin_axes = np.minimum(t1, t2)
    tmax_axes = np.maximum(t1, t2)
    t_near = tmin_axes.max(axis=1)
    t_far = tmax_axes.min(axis=1)
    entry_axis = tmin_axes.argmax(axis=1)
    t = np.where((t_near <= t_far) & (t_near > 1e-9), t_near, np.inf)

    rows = np.arange(len(dirs))
    normals = np.zeros_like(dirs)
    normals[rows, entry_axis] = -np.sign(dirs[rows, entry_axis])
    hit = origins + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
    # surface coordinates: the two axes tangent to the entry face
    tangent = np.array([[1, 2], [0, 2], [0, 1]])[entry_axis]
    s = hit[rows, tangent[:, 0]]
    q = hit[rows, tangent[:, 1]]
    refl = _texture(seed, salt, s, q, period, prim.reflectance, prim.stripe_reflectance,
                    face=entry_axis)
    return t, refl, normals


def cast_rays(primitives: Sequence[Primitive], seed: int, period: float,
              origins: np.ndarray, directions: np.ndarray):
    """
    Nearest intersection of rays with the scene

    Args:
        origins: N×3 or 3
        directions: N×3 (need not be unit length; t is in units of |d|)

    Returns:
        (t, reflectance, normals); t is inf where nothing is hit
    """
    dirs = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), dirs.shape)
    best_t = np.full(len(dirs), np.inf)
    best_r = np.zeros(len(dirs))
    best_n = np.zeros_like(dirs)
    for salt, prim in enumerate(primitives):
        if isinstance(prim, Plane):
            t, r, n = _intersect_plane(prim, salt * 1000, seed, period, origins, dirs)
        else:
            t, r, n = _intersect_box(prim, salt * 1000, seed, period, origins, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_r = np.where(closer, r, best_r)
        best_n = np.where(closer[:, None], n, best_n)
    return best_t, best_r, best_n


def pixel_rays(pose: RigidTransform, K: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rays through every pixel centre of a view, expressed in the scene frame

    Direction vectors have camera-frame z = 1, so the ray parameter equals
    the view-frame depth.
    """
    v, u = np.mgrid[0:K.height, 0:K.width]
    cam_dirs = np.stack(
        [(u.ravel() - K.cx) / K.fx, (v.ravel() - K.cy) / K.fy, np.ones(u.size)], axis=1
    )
    inv = pose.inverse()
    return inv.translation, cam_dirs @ inv.rotation.T


def render_depth(scene: "SyntheticScene", pose: RigidTransform, K: CameraIntrinsics) -> DepthMap:
    """Exact depth of the scene seen through (pose, K) by ray casting"""
    origin, dirs = pixel_rays(pose, K)
    t, _, _ = scene.cast(origin, dirs)
    valid = np.isfinite(t)
    depths = np.where(valid, t, 0.0).reshape(K.height, K.width)
    return DepthMap(depths, valid.reshape(K.height, K.width))


# Generation

def _jitter_layout(primitives: Sequence[Primitive], amount: float, rng: SplitMix64) -> List[Primitive]:
    """Shift boxes on the ground plane; planes stay put"""
    out: List[Primitive] = []
    for prim in primitives:
        if isinstance(prim, Box) and amount > 0:
            dx, dz = rng.uniform(-amount, amount, 2)
            shift = np.array([dx, 0.0, dz])
            prim = Box(tuple(np.asarray(prim.lo) + shift), tuple(np.asarray(prim.hi) + shift),
                       prim.reflectance, prim.stripe_reflectance)
        out.append(prim)
    return out


def _lidar_rays(config: SceneConfig, rng: SplitMix64) -> np.ndarray:
    """Angular scan pattern: uniform steps in elevation and azimuth, jittered"""
    n = config.points
    cols = int(np.ceil(n / config.beams))
    k = np.arange(n)
    beam, col = k % config.beams, k // config.beams
    el_lo, el_hi = np.deg2rad(config.elevation_range)
    half_az = np.deg2rad(config.azimuth_fov) / 2.0
    el_step = (el_hi - el_lo) / config.beams
    az_step = 2.0 * half_az / cols
    jitter = rng.uniform(-0.5, 0.5, 2 * n).reshape(n, 2)
    el = el_lo + (beam + 0.5 + 0.25 * jitter[:, 0]) * el_step
    az = -half_az + (col + 0.5 + jitter[:, 1]) * az_step
    return np.stack([np.cos(el) * np.sin(az), -np.sin(el), np.cos(el) * np.cos(az)], axis=1)


def generate_scene(seed: int, config: Optional[SceneConfig] = None) -> SyntheticScene:
    """
    Sample a LiDAR cloud and render the matching camera view

    Args:
        seed: drives ray jitter, range noise, layout jitter and textures
        config: scene parameters (street_scene_config() if None)

    Returns:
        SyntheticScene, bit-identical for identical (seed, config)
    """
    config = config or street_scene_config()
    config.validate()
    rng = SplitMix64(seed)
    primitives = _jitter_layout(config.primitives, config.layout_jitter, rng.fork("layout"))

    dirs = _lidar_rays(config, rng.fork("rays"))
    t, refl, _ = cast_rays(primitives, seed, config.stripe_period, np.zeros(3), dirs)
    if config.range_noise > 0:
        t = t + config.range_noise * rng.fork("noise").normal(len(t))
    hit = np.isfinite(t) & (t > 0) & (t <= config.max_range)
    if not np.any(hit):
        raise InvalidConfig("no LiDAR ray hits the scene")
    xyz = dirs[hit] * t[hit, None]
    raw = np.concatenate([xyz, refl[hit, None]], axis=1)
    cloud = PointCloud4D.from_raw(raw, normalize=True)
    lo, hi = float(refl[hit].min()), float(refl[hit].max())

    K = config.intrinsics
    gt = config.gt_extrinsics
    uv, z = project_points(cloud.xyz, gt, K)
    with np.errstate(invalid="ignore"):
        in_view = (z > 0) & K.contains(uv[:, 0], uv[:, 1])
    fraction = float(np.mean(in_view))
    if fraction < MIN_FRUSTUM_FRACTION:
        raise InvalidConfig(
            f"only {fraction:.0%} of returns fall inside the camera frustum "
            f"(need {MIN_FRUSTUM_FRACTION:.0%})"
        )

    origin, cam_dirs = pixel_rays(gt, K)
    t_cam, refl_cam, normals = cast_rays(primitives, seed, config.stripe_period, origin, cam_dirs)
    seen = np.isfinite(t_cam)
    gray = np.zeros(len(t_cam))
    if hi > lo:
        gray[seen] = (refl_cam[seen] - lo) / (hi - lo)
    if config.shading > 0:
        unit = cam_dirs / np.linalg.norm(cam_dirs, axis=1, keepdims=True)
        lambert = np.abs(np.sum(unit * normals, axis=1))
        gray = gray * (1.0 - config.shading * (1.0 - lambert))
    gray = np.clip(gray, 0.0, 1.0).reshape(K.height, K.width)
    camera_depth = DepthMap(np.where(seen, t_cam, 0.0).reshape(K.shape), seen.reshape(K.shape))

    logger.debug("Scene %d: %d returns, %.0f%% in view", seed, len(cloud), 100 * fraction)
    return SyntheticScene(
        cloud=cloud,
        camera_image=GrayImage(gray),
        intrinsics=K,
        gt_extrinsics=gt,
        seed=seed,
        camera_depth=camera_depth,
        primitives=primitives,
        stripe_period=config.stripe_period,
        intensity_range=(lo, hi),
    )


# Perturbations

@dataclass(frozen=True)
class PerturbationSpec:
    max_translation: float = 1.0
    max_rotation: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.max_translation < 0 or self.max_rotation < 0:
            raise InvalidConfig("perturbation bounds must be nonnegative")


def sample_perturbations(spec: PerturbationSpec, count: int) -> List[RigidTransform]:
    """
    `count` perturbations from one stream: yaw uniform in ±max_rotation about Y,
    translation uniform on the XZ disc of radius max_translation
    """
    u = SplitMix64(spec.seed).random(3 * count).reshape(count, 3)
    yaw = (2.0 * u[:, 0] - 1.0) * spec.max_rotation
    radius = spec.max_translation * np.sqrt(u[:, 1])
    theta = 2.0 * np.pi * u[:, 2]
    out = []
    for k in range(count):
        if spec.max_translation == 0 and spec.max_rotation == 0:
            out.append(RigidTransform.identity())
            continue
        t = (radius[k] * np.cos(theta[k]), 0.0, radius[k] * np.sin(theta[k]))
        out.append(RigidTransform.from_yaw_pitch_roll(yaw[k], translation=t))
    return out


def sample_perturbation(spec: PerturbationSpec) -> RigidTransform:
    return sample_perturbations(spec, 1)[0]
