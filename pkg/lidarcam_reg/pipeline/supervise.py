"""
Supervision targets for one scene
Ground-truth coarse matches, repeatability labels and, with weights, the training losses
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..config import RunConfig
from ..errors import EmptyGroundTruth, EmptyMatchSet, FormatError
from ..features.weights import ModelWeights
from ..geometry.camera import DepthMap, project
from ..geometry.formats import PathLike, write_pgm, write_text_atomic
from ..geometry.transforms import RigidTransform
from ..matching.dump import MatchRecords, write_matches
from ..matching.refine import cell_to_fine, fine_to_pixel
from ..supervision.ground_truth import (
    GtMatchSet, GtRepeatabilityMap, gt_coarse_matches, gt_fine_targets, gt_repeatability,
)
from ..supervision.losses import LossReport, loss_coarse, loss_fine, loss_repeatability, total_loss
from .calibrate import MatchingResult, SceneFiles, camera_depth_for, match_views

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SupervisionResult:
    matches: GtMatchSet
    repeatability: GtRepeatabilityMap
    matching: MatchingResult
    losses: Optional[LossReport] = None


def _camera_depth(files: SceneFiles, matching: MatchingResult, gt: RigidTransform) -> DepthMap:
    if matching.scale == 1.0:
        return camera_depth_for(files)
    # resized working view: rasterize the cloud at the working intrinsics
    return project(files.cloud, gt, matching.K)[1]


def gt_match_records(gt: GtMatchSet) -> MatchRecords:
    """Coarse pairs as full-resolution pixel pairs (cell centres on the fine grid)"""
    lidar = np.column_stack(cell_to_fine(gt.lidar_index, gt.lidar_grid[1])[::-1])
    cam = np.column_stack(cell_to_fine(gt.cam_index, gt.cam_grid[1])[::-1])
    return MatchRecords(
        fine_to_pixel(lidar),
        fine_to_pixel(cam),
        np.ones(len(gt)),
        np.zeros(len(gt)),
        {"rho": f"{gt.rho:g}"},
    )


def supervise_scene(files: SceneFiles, config: RunConfig, view_pose: Optional[RigidTransform] = None,
                    weights: Optional[ModelWeights] = None) -> SupervisionResult:
    """
    Ground truth for the LiDAR view rendered at view_pose (default: the gt pose)

    Args:
        files: scene directory contents, gt pose required
        config: run configuration (rho, delta_d, matcher parameters)
        view_pose: LiDAR -> virtual view
        weights: learned model; enables the loss report

    Returns:
        SupervisionResult
    """
    if files.gt_pose is None:
        raise FormatError(f"{files.root}: supervision needs gt_pose.txt")
    config = config.effective()
    gt = files.gt_pose
    view = gt if view_pose is None else view_pose
    matching = match_views(files.cloud, files.camera, files.intrinsics, view, config, weights)
    relative = gt @ view.inverse()
    d_cam = _camera_depth(files, matching, gt)

    rep = gt_repeatability(matching.depth, d_cam, matching.K, relative, config.delta_d)
    matches = gt_coarse_matches(matching.depth, matching.K, relative, config.rho, repeatability=rep)
    logger.info("✓ Ground truth: %d coarse pairs, %d/%d repeatable cells",
                len(matches), int(rep.labels.sum()), len(rep))

    losses = None
    if weights is not None:
        losses = _losses(matching, matches, rep, relative, config)
    return SupervisionResult(matches, rep, matching, losses)


def _losses(matching: MatchingResult, matches: GtMatchSet, rep: GtRepeatabilityMap,
            relative: RigidTransform, config: RunConfig) -> LossReport:
    coarse = fine = rep_term = None
    try:
        coarse = loss_coarse(matching.confidence, matches)
    except EmptyGroundTruth as e:
        logger.warning("⚠️ Coarse loss skipped: %s", e)
    targets, ok = gt_fine_targets(matching.fine.lidar_px, matching.depth, matching.K, relative)
    try:
        fine = loss_fine(matching.fine.subset(ok), targets[ok], squared=config.squared_fine_loss)
    except EmptyMatchSet as e:
        logger.warning("⚠️ Fine loss skipped: %s", e)
    if matching.repeatability is not None:
        rep_term = loss_repeatability(matching.repeatability, rep)
    return total_loss(coarse, fine, rep_term)


def write_supervision(result: SupervisionResult, out_dir: PathLike) -> Path:
    """gt_matches.txt, gt_repeatability.pgm and, when computed, losses.txt"""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    write_matches(root / "gt_matches.txt", gt_match_records(result.matches))
    write_pgm(root / "gt_repeatability.pgm", result.repeatability.labels, vmax=1.0)
    if result.losses is not None:
        write_text_atomic(root / "losses.txt", result.losses.format())
    return root
