"""
Command-line interface

    python -m lidarcam_reg synth --seed 7 --out scenes/7
    python -m lidarcam_reg calibrate --scene scenes/7 --out runs/7
    python -m lidarcam_reg eval --config bench.cfg --jobs 4

Exit codes: 0 success, 2 invalid config, 3 registration failure, 4 I/O error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from .config import RunConfig, describe, format_scene_config, load_run_config
from .errors import (
    EXIT_OK, EXIT_REGISTRATION_FAILURE, InvalidConfig, RegistrationError, exit_code_for,
)
from .evaluation.benchmark import run_benchmark
from .evaluation.metrics import pose_errors
from .evaluation.report import format_text
from .features.weights import init_model_weights, load_model_weights, write_weights
from .geometry.camera import project
from .geometry.formats import (
    read_intrinsics, read_pose, read_velodyne_bin, write_pfm, write_pgm, write_pose, write_text_atomic,
)
from .geometry.transforms import RigidTransform
from .matching.dump import write_matches
from .pipeline.calibrate import (
    SceneFiles, calibrate, load_scene_dir, match_views, render_pose_overlay, write_scene_dir,
)
from .pipeline.supervise import supervise_scene, write_supervision
from .scene.synth import PerturbationSpec, generate_scene, sample_perturbation
from .utils.image_utils import save_png

logger = logging.getLogger(__name__)

LOG_FORMAT = "[lidarcam] %(levelname)s %(name)s: %(message)s"
INIT_POSE_FILE = "init_pose.txt"

# RunConfig keys exposed as --flags; anything else goes through --set key=value
FLAG_KEYS = (
    "seed", "weights", "feature_mode", "projection_mode", "long_side", "theta_c", "rho", "delta_d",
    "window", "sim_temperature", "fine_temperature", "mnn_source", "fill_radius", "densify_radius",
    "inlier_threshold", "max_iters", "confidence", "epi_thresh", "rot_thresh", "trans_thresh",
    "max_translation", "max_rotation", "scenes", "samples", "jobs", "cache_dir",
)


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, help="key = value configuration file")
    parent.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key (repeatable)")
    parent.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    group = parent.add_argument_group("configuration overrides")
    for key in FLAG_KEYS:
        group.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="VALUE",
                           help=f"override '{key}'")
    group.add_argument("--no-repeatability", dest="use_repeatability", action="store_const",
                       const="false", default=None, help="Dual-Softmax only (repeatability off)")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parent()
    parser = argparse.ArgumentParser(prog="lidarcam_reg",
                                     description="Targetless LiDAR-camera extrinsic calibration")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[parent], help="write a synthetic scene directory")
    p.add_argument("--out", type=Path, required=True, help="scene directory (created)")
    p.add_argument("--perturb", action="store_true",
                   help=f"also write {INIT_POSE_FILE} = P ∘ gt from the perturbation bounds")

    p = sub.add_parser("project", parents=[parent], help="project a cloud into intensity/depth maps")
    p.add_argument("--cloud", type=Path, required=True)
    p.add_argument("--pose", type=Path, required=True)
    p.add_argument("--intrinsics", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    for name, text in (("match", "write refined matches for a scene"),
                       ("supervise", "write ground-truth matches, repeatability and losses"),
                       ("calibrate", "estimate the extrinsics of a scene")):
        p = sub.add_parser(name, parents=[parent], help=text)
        p.add_argument("--scene", type=Path, required=True, help="scene directory")
        p.add_argument("--init", type=Path, help=f"initial pose (default: scene/{INIT_POSE_FILE}, then gt)")
        p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("eval", parents=[parent], help="run the benchmark and write the metrics report")
    p.add_argument("--out", type=Path, help="report directory (default: output_dir)")

    p = sub.add_parser("init-weights", parents=[parent], help="write a randomly initialised weight file")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--coarse-channels", type=int, default=64)
    p.add_argument("--fine-channels", type=int, default=32)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file, then flags and --set, then REG_SEED"""
    overrides: Dict[str, str] = {}
    for key in FLAG_KEYS + ("use_repeatability",):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    for item in args.set:
        if "=" not in item:
            raise InvalidConfig(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        overrides[key] = value
    config = load_run_config(args.config, overrides)
    return config.validate()


def _init_pose(args: argparse.Namespace, files: SceneFiles) -> RigidTransform:
    if args.init is not None:
        return read_pose(args.init)
    default = files.root / INIT_POSE_FILE
    if default.exists():
        return read_pose(default)
    if files.gt_pose is None:
        raise InvalidConfig(f"{files.root}: no --init, no {INIT_POSE_FILE} and no gt pose")
    logger.warning("⚠️ No initial pose given, starting from the ground truth")
    return files.gt_pose


def _weights(config: RunConfig):
    return load_model_weights(config.weights) if config.feature_mode == "learned" else None


# Commands

def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    scene = generate_scene(config.seed, config.scene)
    root = write_scene_dir(scene, args.out, format_scene_config(config.scene))
    if args.perturb:
        spec = PerturbationSpec(config.max_translation, config.max_rotation, config.seed)
        write_pose(root / INIT_POSE_FILE, sample_perturbation(spec) @ scene.gt_extrinsics)
    print(f"scene {config.seed}: {len(scene.cloud)} points -> {root}")
    return EXIT_OK


def cmd_project(args: argparse.Namespace, config: RunConfig) -> int:
    cloud = read_velodyne_bin(args.cloud)
    K = read_intrinsics(args.intrinsics)
    image, depth = project(cloud, read_pose(args.pose), K, config.projection_mode)
    args.out.mkdir(parents=True, exist_ok=True)
    write_pfm(args.out / "intensity.pfm", image.pixels)
    write_pfm(args.out / "depth.pfm", depth.depths)
    write_pgm(args.out / "intensity.pgm", image.pixels, vmax=1.0)
    print(f"{int(image.valid.sum())} pixels covered -> {args.out}")
    return EXIT_OK


def cmd_match(args: argparse.Namespace, config: RunConfig) -> int:
    files = load_scene_dir(args.scene)
    config = config.effective()
    matching = match_views(files.cloud, files.camera, files.intrinsics, _init_pose(args, files),
                           config, _weights(config))
    args.out.mkdir(parents=True, exist_ok=True)
    write_matches(args.out / "matches.txt", matching.fine, **describe(config))
    print(f"{len(matching.coarse)} coarse / {len(matching.fine)} refined matches -> {args.out}")
    return EXIT_OK


def cmd_supervise(args: argparse.Namespace, config: RunConfig) -> int:
    files = load_scene_dir(args.scene)
    view = read_pose(args.init) if args.init is not None else None
    result = supervise_scene(files, config, view, _weights(config))
    write_supervision(result, args.out)
    print(f"{len(result.matches)} ground-truth pairs -> {args.out}")
    if result.losses is not None:
        print(result.losses.format(), end="")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace, config: RunConfig) -> int:
    files = load_scene_dir(args.scene)
    init = _init_pose(args, files)
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        result = calibrate(files.cloud, files.camera, files.intrinsics, init, config, _weights(config))
    except RegistrationError as e:
        if exit_code_for(e) == EXIT_REGISTRATION_FAILURE:
            write_text_atomic(args.out / "report.txt", f"failure = {type(e).__name__}\nmessage = {e}\n")
        raise

    write_pose(args.out / "pose.txt", result.pose)
    write_matches(args.out / "matches.txt", result.matching.fine, **describe(config.effective()))
    report = result.estimate.format_report()
    if files.gt_pose is not None:
        err = pose_errors(result.pose, files.gt_pose)
        report += f"e_t = {err.e_t:.17g}\ne_r = {err.e_r:.17g}\n"
    write_text_atomic(args.out / "report.txt", report)
    save_png(args.out / "overlay.png",
             render_pose_overlay(files.cloud, result.pose, result.matching.camera, result.matching.K))
    print(report, end="")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    report = run_benchmark(config, args.out)
    print(format_text(report), end="")
    return EXIT_OK


def cmd_init_weights(args: argparse.Namespace, config: RunConfig) -> int:
    tensors = init_model_weights(config.seed, args.coarse_channels, args.fine_channels)
    write_weights(args.out, tensors)
    print(f"weights (seed {config.seed}) -> {args.out}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "project": cmd_project,
    "match": cmd_match,
    "supervise": cmd_supervise,
    "calibrate": cmd_calibrate,
    "eval": cmd_eval,
    "init-weights": cmd_init_weights,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format=LOG_FORMAT, force=True)
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](args, config)
    except Exception as e:
        code = exit_code_for(e)
        if isinstance(e, (RegistrationError, OSError)):
            logger.error("%s: %s", type(e).__name__, e)
        else:
            logger.exception("Unexpected error")
        return code


if __name__ == "__main__":
    sys.exit(main())
