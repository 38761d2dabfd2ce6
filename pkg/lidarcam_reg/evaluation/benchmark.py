"""
Benchmark harness
Runs the calibration pipeline over perturbed samples and aggregates metrics
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from ..config import RunConfig, format_scene_config, parse_sample_list
from ..errors import (
    DegenerateConfiguration, EmptyProjection, EmptyResults, FormatError, InsufficientCorrespondences,
    NoConsensus,
)
from ..features.weights import ModelWeights, load_model_weights
from ..geometry.formats import format_pose, write_pose
from ..geometry.transforms import RigidTransform
from ..matching.dump import write_matches
from ..pipeline.calibrate import load_scene_dir, match_views, render_pose_overlay, solve_pose
from ..pipeline.tasks import BatchTaskManager, ProgressCallback, ProgressTracker
from ..scene.synth import PerturbationSpec, generate_scene, sample_perturbations
from ..utils.cache import ResultCache
from ..utils.image_utils import save_png
from .metrics import MetricsReport, RegistrationResult, build_report, matching_precision
from .report import write_report

logger = logging.getLogger(__name__)

SYNTHETIC_GROUP = "synthetic"

# keys that change a sample's outcome
RESULT_KEYS = (
    "seed", "weights", "feature_mode", "projection_mode", "long_side", "theta_c", "window",
    "sim_temperature", "fine_temperature", "use_repeatability", "mnn_source", "fill_radius",
    "densify_radius", "inlier_threshold", "max_iters", "confidence", "epi_thresh",
)


@dataclass(frozen=True)
class BenchmarkSample:
    """One registration problem: a scene (synthetic seed or directory) and its perturbation"""

    sample_id: str
    group: str
    perturbation: RigidTransform
    scene_seed: Optional[int] = None
    scene_dir: Optional[Path] = None

    def cache_params(self, config: RunConfig) -> dict:
        params = {key: getattr(config, key) for key in RESULT_KEYS}
        params.update({
            "sample_id": self.sample_id,
            "perturbation": format_pose(self.perturbation),
            "scene_seed": self.scene_seed,
            "scene": format_scene_config(config.scene) if self.scene_seed is not None else None,
            "scene_dir": None if self.scene_dir is None else str(self.scene_dir.resolve()),
        })
        return params


def build_samples(config: RunConfig) -> List[BenchmarkSample]:
    """
    Synthetic samples (config.scenes seeds) or dataset samples (config.samples list)

    Perturbations come from one stream seeded by config.seed, one per sample.
    """
    spec = PerturbationSpec(config.max_translation, config.max_rotation, config.seed)
    if config.samples is not None:
        entries = parse_sample_list(config.samples)
        perturbations = sample_perturbations(spec, len(entries))
        return [
            BenchmarkSample(f"{k:05d}", group, p, scene_dir=scene_dir)
            for k, ((group, scene_dir), p) in enumerate(zip(entries, perturbations))
        ]
    perturbations = sample_perturbations(spec, config.scenes)
    return [
        BenchmarkSample(f"{k:05d}", SYNTHETIC_GROUP, p, scene_seed=config.seed + k)
        for k, p in enumerate(perturbations)
    ]


def run_sample(sample: BenchmarkSample, config: RunConfig, weights: Optional[ModelWeights] = None,
               out_dir: Optional[Path] = None) -> RegistrationResult:
    """
    Calibrate one sample starting from T_init = P ∘ T_gt

    Registration failures are returned as RegistrationResult.failure.
    Artifacts (matches.txt, pose.txt, overlay.png) go to out_dir when given.
    """
    if sample.scene_dir is not None:
        files = load_scene_dir(sample.scene_dir)
        if files.gt_pose is None:
            raise FormatError(f"{sample.scene_dir}: benchmark samples need gt_pose.txt")
        cloud, camera, K, gt = files.cloud, files.camera, files.intrinsics, files.gt_pose
    else:
        scene = generate_scene(sample.scene_seed, config.scene)
        cloud, camera, K, gt = scene.cloud, scene.camera_image, scene.intrinsics, scene.gt_extrinsics

    init = sample.perturbation @ gt
    base = dict(sample_id=sample.sample_id, gt=gt, group=sample.group)
    try:
        matching = match_views(cloud, camera, K, init, config, weights)
    except EmptyProjection as e:
        logger.warning("⚠️ Sample %s: %s", sample.sample_id, e)
        return RegistrationResult(**base, failure="InsufficientCorrespondences")

    # the virtual view sits at init, so the view -> camera motion is gt ∘ init⁻¹
    precision = matching_precision(matching.fine, gt @ init.inverse(), matching.K, matching.K,
                                   config.epi_thresh)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_matches(out_dir / "matches.txt", matching.fine, theta_c=config.theta_c,
                      window=config.window, sim_temperature=config.sim_temperature,
                      fine_temperature=config.fine_temperature)

    extra = dict(precision=float(precision.precision), matches=len(matching.fine))
    try:
        _, estimate = solve_pose(matching, init, config)
    except InsufficientCorrespondences as e:
        logger.warning("⚠️ Sample %s: %s", sample.sample_id, e)
        return RegistrationResult(**base, **extra, failure="InsufficientCorrespondences")
    except (NoConsensus, DegenerateConfiguration) as e:
        logger.warning("⚠️ Sample %s: %s", sample.sample_id, e)
        return RegistrationResult(**base, **extra, failure="NoConsensus")

    if out_dir is not None:
        write_pose(out_dir / "pose.txt", estimate.transform)
        save_png(out_dir / "overlay.png",
                 render_pose_overlay(cloud, estimate.transform, matching.camera, matching.K))
    return RegistrationResult(**base, **extra, estimate=estimate.transform,
                              inliers=estimate.inlier_count)


class _SampleRunner:
    """Per-sample callable for the task manager (cache lookup, run, cache store)"""

    def __init__(self, config: RunConfig, weights: Optional[ModelWeights],
                 out_dir: Optional[Path], cache: Optional[ResultCache]):
        self.config = config
        self.weights = weights
        self.out_dir = out_dir
        self.cache = cache

    def __call__(self, sample: BenchmarkSample) -> RegistrationResult:
        params = sample.cache_params(self.config)
        if self.cache is not None:
            cached = self.cache.get_cached(params)
            if cached is not None:
                return RegistrationResult.from_dict(cached)
        sample_dir = None if self.out_dir is None else self.out_dir / "samples" / sample.sample_id
        result = run_sample(sample, self.config, self.weights, sample_dir)
        if self.cache is not None:
            self.cache.save_to_cache(params, result.to_dict())
        return result


def run_benchmark(config: RunConfig, out_dir: Optional[Path] = None,
                  progress_callback: Optional[ProgressCallback] = None) -> MetricsReport:
    """
    Run every sample and write the report

    Args:
        config: run configuration (scenes or samples, perturbation bounds, matcher/pose parameters)
        out_dir: report and artifact root (default: config.output_dir)
        progress_callback: called with (done, total, elapsed seconds)

    Returns:
        MetricsReport over all samples, ordered by sample id
    """
    config = config.effective()
    out = Path(config.output_dir if out_dir is None else out_dir)
    samples = build_samples(config)
    if not samples:
        raise EmptyResults("benchmark has no samples (set scenes or samples)")
    weights = load_model_weights(config.weights) if config.feature_mode == "learned" else None
    cache = ResultCache(config.cache_dir) if config.cache_dir else None

    logger.info("Running %d samples with %d job(s)", len(samples), config.jobs)
    manager = BatchTaskManager(config.jobs, progress_callback or ProgressTracker())
    results = manager.execute_batch(_SampleRunner(config, weights, out, cache), samples)
    report = build_report(results, config.rot_thresh, config.trans_thresh, config.epi_thresh)
    write_report(report, out)
    return report
