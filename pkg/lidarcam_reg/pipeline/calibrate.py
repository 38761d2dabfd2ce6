"""
End-to-end extrinsic calibration
project -> features -> match -> refine -> lift -> RANSAC-EPnP
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from PIL import Image

from ..config import RunConfig
from ..errors import EmptyProjection, FormatError, InsufficientCorrespondences
from ..features.attention import attend
from ..features.encoding import FlatFeatures, flatten, positional_encode
from ..features.extractor import FeaturePyramid, cell_validity, extract_pyramid
from ..features.weights import ModelWeights
from ..geometry.camera import (
    CameraIntrinsics, DepthMap, GrayImage, IntensityImage, PointCloud4D, project, project_points,
)
from ..geometry.formats import (
    PathLike, read_intrinsics, read_pfm, read_pose, read_velodyne_bin, write_intrinsics,
    write_pfm, write_pose, write_text_atomic, write_velodyne_bin,
)
from ..geometry.raster import densify_intensity, fill_depth_nearest, resize_long_side
from ..geometry.transforms import RigidTransform
from ..matching.coarse import (
    CoarseMatchSet, ConfidenceMatrix, ProbMatrix, RepeatabilityMap, cosine_similarity,
    dual_softmax, extract_coarse_matches, fuse_confidence, repeatability,
)
from ..matching.refine import FineMatchSet, refine
from ..pose.lift import Correspondences, lift_matches
from ..pose.ransac import PoseEstimate, ransac_pnp
from ..scene.synth import SyntheticScene
from ..utils.image_utils import gray2pil, load_gray, render_overlay, save_png

logger = logging.getLogger(__name__)

SCENE_FILES = {
    "cloud": "cloud.bin",
    "camera": "camera.png",
    "camera_depth": "camera_depth.pfm",
    "gt_pose": "gt_pose.txt",
    "intrinsics": "intrinsics.txt",
    "scene": "scene.txt",
}


@dataclass(frozen=True)
class MatchingResult:
    """Everything the matcher produced for one camera/LiDAR pair"""

    camera: GrayImage
    lidar: IntensityImage
    depth: DepthMap
    K: CameraIntrinsics
    scale: float
    lidar_pyramid: FeaturePyramid
    camera_pyramid: FeaturePyramid
    prob: ProbMatrix
    confidence: ConfidenceMatrix
    repeatability: Optional[RepeatabilityMap]
    coarse: CoarseMatchSet
    fine: FineMatchSet


@dataclass(frozen=True)
class CalibrationResult:
    matching: MatchingResult
    correspondences: Correspondences
    estimate: PoseEstimate
    init_pose: RigidTransform

    @property
    def pose(self) -> RigidTransform:
        return self.estimate.transform


def prepare_camera(camera: GrayImage, K: CameraIntrinsics,
                   long_side: int) -> Tuple[GrayImage, CameraIntrinsics, float]:
    """Downscale so the long side is at most long_side (0 keeps the native size)"""
    if long_side <= 0 or max(camera.shape) <= long_side:
        return camera, K, 1.0
    resized, scale = resize_long_side(camera, long_side)
    h, w = resized.shape
    return resized, K.scaled(scale, w, h), scale


def _enhance(flat_lidar: FlatFeatures, flat_cam: FlatFeatures,
             weights: Optional[ModelWeights]) -> Tuple[FlatFeatures, FlatFeatures]:
    if weights is None:
        return flat_lidar, flat_cam
    return attend(positional_encode(flat_lidar), positional_encode(flat_cam), weights.coarse_attention)


def match_views(
    cloud: PointCloud4D,
    camera: GrayImage,
    K: CameraIntrinsics,
    view_pose: RigidTransform,
    config: RunConfig,
    weights: Optional[ModelWeights] = None,
) -> MatchingResult:
    """
    Project the cloud through view_pose and match it against the camera image

    Args:
        cloud: LiDAR returns
        camera: camera image at native resolution
        K: native camera intrinsics
        view_pose: LiDAR -> virtual view (the initial extrinsics)
        config: effective run configuration
        weights: learned model; hand-crafted features when None

    Returns:
        MatchingResult at the working resolution
    """
    camera, K_work, scale = prepare_camera(camera, K, config.long_side)
    lidar, depth = project(cloud, view_pose, K_work, config.projection_mode)
    features_in = lidar
    if weights is None and config.densify_radius > 0:
        features_in = densify_intensity(lidar, config.densify_radius)

    backbone = (lambda branch: weights.backbone(branch)) if weights is not None else (lambda branch: None)
    lidar_pyr = extract_pyramid(features_in, "lidar", backbone("lidar"))
    cam_pyr = extract_pyramid(camera, "camera", backbone("camera"))
    flat_lidar, flat_cam = _enhance(flatten(lidar_pyr), flatten(cam_pyr), weights)

    rep: Optional[RepeatabilityMap] = None
    if config.use_repeatability:
        if weights is not None:
            rep = repeatability(flat_lidar, weights.repeatability)
        else:
            rep = RepeatabilityMap.from_validity(cell_validity(features_in.valid))

    sim = cosine_similarity(flat_lidar, flat_cam, config.sim_temperature)
    prob = dual_softmax(sim)
    conf = fuse_confidence(prob, rep)
    coarse = extract_coarse_matches(
        conf, config.theta_c,
        mnn_on=prob if config.mnn_source == "prob" else None,
        lidar_grid=lidar_pyr.coarse_shape, cam_grid=cam_pyr.coarse_shape,
    )
    fine = refine(coarse, lidar_pyr, cam_pyr, w=config.window,
                  fine_weights=weights.fine_attention if weights is not None else None,
                  temperature=config.fine_temperature)
    logger.debug("%d coarse matches refined (%d windows clamped)", len(coarse), int(fine.clamped.sum()))
    return MatchingResult(camera, lidar, depth, K_work, scale, lidar_pyr, cam_pyr,
                          prob, conf, rep, coarse, fine)


def solve_pose(matching: MatchingResult, init_pose: RigidTransform,
               config: RunConfig) -> Tuple[Correspondences, PoseEstimate]:
    """Lift refined matches through the filled LiDAR depth and run RANSAC-EPnP"""
    if len(matching.fine) < 4:
        raise InsufficientCorrespondences(f"only {len(matching.fine)} matches above "
                                          f"theta_c={config.theta_c}")
    filled = fill_depth_nearest(matching.depth, config.fill_radius)
    corrs = lift_matches(matching.fine, filled, matching.K, view_pose=init_pose, K_cam=matching.K)
    estimate = ransac_pnp(corrs, matching.K, max_iters=config.max_iters,
                          inlier_threshold=config.inlier_threshold,
                          confidence=config.confidence, seed=config.seed)
    return corrs, estimate


def calibrate(
    cloud: PointCloud4D,
    camera: GrayImage,
    K: CameraIntrinsics,
    init_pose: RigidTransform,
    config: RunConfig,
    weights: Optional[ModelWeights] = None,
) -> CalibrationResult:
    """
    Estimate the LiDAR -> camera extrinsics starting from init_pose

    Raises:
        EmptyProjection, InsufficientCorrespondences, NoConsensus
    """
    config = config.effective()
    matching = match_views(cloud, camera, K, init_pose, config, weights)
    corrs, estimate = solve_pose(matching, init_pose, config)
    return CalibrationResult(matching, corrs, estimate, init_pose)


def render_pose_overlay(cloud: PointCloud4D, pose: RigidTransform, camera: GrayImage,
                        K: CameraIntrinsics, radius: int = 1) -> Image.Image:
    """Cloud projected through pose, tinted by depth over the camera image"""
    uv, z = project_points(cloud.xyz, pose, K)
    keep = z > 0
    keep[keep] = K.contains(uv[keep, 0], uv[keep, 1])
    return render_overlay(camera, uv[keep], z[keep], radius=radius)


# Scene directories

@dataclass(frozen=True)
class SceneFiles:
    """A camera/LiDAR pair on disk"""

    cloud: PointCloud4D
    camera: GrayImage
    intrinsics: CameraIntrinsics
    gt_pose: Optional[RigidTransform]
    camera_depth: Optional[DepthMap]
    root: Path


def write_scene_dir(scene: SyntheticScene, out_dir: PathLike, scene_text: str = "") -> Path:
    """cloud.bin, camera.png (16-bit), camera_depth.pfm, gt_pose.txt, intrinsics.txt, scene.txt"""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    write_velodyne_bin(root / SCENE_FILES["cloud"], scene.cloud)
    save_png(root / SCENE_FILES["camera"], gray2pil(scene.camera_image, bits=16))
    write_pfm(root / SCENE_FILES["camera_depth"], scene.camera_depth.depths)
    write_pose(root / SCENE_FILES["gt_pose"], scene.gt_extrinsics)
    write_intrinsics(root / SCENE_FILES["intrinsics"], scene.intrinsics)
    write_text_atomic(root / SCENE_FILES["scene"], f"seed = {scene.seed}\n" + scene_text)
    logger.info("✓ Scene %d written to %s (%d points)", scene.seed, root, len(scene.cloud))
    return root


def load_scene_dir(scene_dir: PathLike) -> SceneFiles:
    """Read a scene directory; gt pose and camera depth are optional"""
    root = Path(scene_dir)
    for key in ("cloud", "camera", "intrinsics"):
        if not (root / SCENE_FILES[key]).exists():
            raise FormatError(f"{root}: missing {SCENE_FILES[key]}")
    gt_path = root / SCENE_FILES["gt_pose"]
    depth_path = root / SCENE_FILES["camera_depth"]
    camera_depth = None
    if depth_path.exists():
        depths = read_pfm(depth_path).astype(np.float64)
        camera_depth = DepthMap(depths, depths > 0)
    return SceneFiles(
        cloud=read_velodyne_bin(root / SCENE_FILES["cloud"]),
        camera=load_gray(root / SCENE_FILES["camera"]),
        intrinsics=read_intrinsics(root / SCENE_FILES["intrinsics"]),
        gt_pose=read_pose(gt_path) if gt_path.exists() else None,
        camera_depth=camera_depth,
        root=root,
    )


def camera_depth_for(files: SceneFiles) -> DepthMap:
    """Ground-truth camera depth: rendered map when present, else the cloud seen through gt"""
    if files.camera_depth is not None:
        return files.camera_depth
    if files.gt_pose is None:
        raise FormatError(f"{files.root}: no camera depth and no gt pose")
    try:
        _, depth = project(files.cloud, files.gt_pose, files.intrinsics)
    except EmptyProjection:
        h, w = files.intrinsics.shape
        return DepthMap(np.zeros((h, w)), np.zeros((h, w), dtype=bool))
    return depth
