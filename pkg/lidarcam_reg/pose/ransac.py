"""
RANSAC around EPnP
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import DegenerateConfiguration, InsufficientCorrespondences, InvalidConfig, NoConsensus
from ..geometry.camera import CameraIntrinsics
from ..geometry.transforms import RigidTransform
from ..scene.prng import SplitMix64
from .epnp import MIN_POINTS, epnp_arrays, reprojection_errors
from .lift import Correspondences

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 1000
DEFAULT_INLIER_THRESHOLD = 4.0
DEFAULT_CONFIDENCE = 0.999


@dataclass(frozen=True)
class PoseEstimate:
    transform: RigidTransform
    inlier_mask: np.ndarray
    mean_reprojection_error: float
    iterations_used: int
    skipped_samples: int = 0
    refit: bool = True

    @property
    def inlier_count(self) -> int:
        return int(np.sum(self.inlier_mask))

    def format_report(self) -> str:
        return (
            f"inliers = {self.inlier_count}\n"
            f"correspondences = {len(self.inlier_mask)}\n"
            f"mean_reprojection_error = {self.mean_reprojection_error:.17g}\n"
            f"iterations = {self.iterations_used}\n"
            f"skipped_samples = {self.skipped_samples}\n"
        )


def required_iterations(inlier_ratio: float, confidence: float, sample_size: int = MIN_POINTS) -> float:
    """log(1 - p) / log(1 - w^s); 0 when every point is an inlier"""
    good = inlier_ratio ** sample_size
    if good >= 1.0:
        return 0.0
    if good <= 0.0:
        return math.inf
    return math.log(1.0 - confidence) / math.log(1.0 - good)


def _score(pose: RigidTransform, corrs: Correspondences, K: CameraIntrinsics,
           threshold: float) -> Tuple[np.ndarray, float]:
    err = reprojection_errors(pose, corrs.points3d, corrs.pixels, K)
    mask = err < threshold
    mean = float(np.mean(err[mask])) if np.any(mask) else math.inf
    return mask, mean


def ransac_pnp(
    corrs: Correspondences,
    K: CameraIntrinsics,
    max_iters: int = DEFAULT_MAX_ITERS,
    inlier_threshold: float = DEFAULT_INLIER_THRESHOLD,
    confidence: float = DEFAULT_CONFIDENCE,
    seed: int = 0,
) -> PoseEstimate:
    """
    Robust pose from 3D-2D correspondences

    Hypotheses come from EPnP on seeded 4-subsets; the best one maximizes
    the inlier count, then minimizes the mean inlier error, then the
    hypothesis index. Sampling stops early once the adaptive iteration
    bound is reached. EPnP is then refitted on the winning inlier set; the
    refit replaces the winning hypothesis only when its (inlier count,
    -mean inlier error) is at least as good, otherwise the hypothesis is
    returned unchanged and `refit` is False. The mask and mean error
    always belong to the returned pose.

    Raises:
        InsufficientCorrespondences with fewer than 4 pairs
        NoConsensus when no hypothesis gathers 4 inliers
    """
    n = len(corrs)
    if n < MIN_POINTS:
        raise InsufficientCorrespondences(f"RANSAC needs {MIN_POINTS} correspondences, got {n}")
    if not 0.0 < confidence < 1.0:
        raise InvalidConfig(f"confidence must lie in (0, 1), got {confidence}")
    if max_iters < 1 or inlier_threshold <= 0:
        raise InvalidConfig(f"need max_iters >= 1 and inlier_threshold > 0 "
                            f"(got {max_iters}, {inlier_threshold})")

    rng = SplitMix64(seed)
    best: Optional[Tuple[int, float, int]] = None
    best_pose: Optional[RigidTransform] = None
    needed = math.inf
    skipped = 0
    iterations = 0
    while iterations < max_iters and iterations < needed:
        iterations += 1
        sample = rng.sample_distinct(n, MIN_POINTS)
        try:
            pose = epnp_arrays(corrs.points3d[sample], corrs.pixels[sample], K)
        except DegenerateConfiguration:
            skipped += 1
            continue
        mask, mean = _score(pose, corrs, K, inlier_threshold)
        count = int(mask.sum())
        key = (count, -mean, -iterations)
        if best is None or key > best:
            best, best_pose = key, pose
            needed = required_iterations(count / n, confidence)
    if skipped:
        logger.debug("⚠️ %d degenerate RANSAC samples skipped", skipped)
    if best is None or best[0] < MIN_POINTS:
        raise NoConsensus(f"best hypothesis has {0 if best is None else best[0]} inliers "
                          f"after {iterations} iterations")

    mask, mean = _score(best_pose, corrs, K, inlier_threshold)
    pose, refit = best_pose, False
    try:
        candidate = epnp_arrays(corrs.points3d[mask], corrs.pixels[mask], K)
        refit_mask, refit_mean = _score(candidate, corrs, K, inlier_threshold)
        if (refit_mask.sum(), -refit_mean) >= (mask.sum(), -mean):
            pose, mask, mean, refit = candidate, refit_mask, refit_mean, True
    except DegenerateConfiguration as e:
        logger.debug("Inlier refit skipped: %s", e)

    logger.info("✓ RANSAC: %d/%d inliers, mean error %.3f px, %d iterations",
                int(mask.sum()), n, mean, iterations)
    return PoseEstimate(pose, mask, mean, iterations, skipped, refit)
