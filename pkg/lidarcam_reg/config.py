"""
Run configuration
Plain-text `key = value` files, `#` comments, repeated keys accumulate.
Precedence: defaults < config file < command-line flags < REG_SEED
"""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidConfig
from .geometry.camera import PROJECTION_MODES, CameraIntrinsics
from .geometry.formats import PathLike
from .geometry.transforms import RigidTransform
from .scene.synth import Box, Plane, SceneConfig, street_scene_config

logger = logging.getLogger(__name__)

SEED_ENV = "REG_SEED"
FEATURE_MODES = ("handcrafted", "learned")
MNN_SOURCES = ("fused", "prob")

# zero-mean unit-norm hand-crafted descriptors need a sharper softmax than learned ones
HANDCRAFTED_PRESET = {
    "sim_temperature": 0.02,
    "fine_temperature": 0.05,
    "theta_c": 0.2,
    "densify_radius": 8.0,
}


def parse_key_values(text: str, source: str = "<config>") -> List[Tuple[str, str]]:
    """`key = value` lines in file order; comments and blank lines skipped"""
    pairs = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{source}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InvalidConfig(f"{source}:{number}: empty key")
        pairs.append((key, value))
    return pairs


def read_key_values(path: PathLike) -> List[Tuple[str, str]]:
    return parse_key_values(Path(path).read_text(), str(path))


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise InvalidConfig(f"{key}: expected a boolean, got {value!r}")


def _floats(key: str, value: str, count: Optional[int] = None) -> List[float]:
    try:
        numbers = [float(v) for v in value.replace(",", " ").split()]
    except ValueError as e:
        raise InvalidConfig(f"{key}: {e}") from e
    if count is not None and len(numbers) != count:
        raise InvalidConfig(f"{key}: expected {count} numbers, got {len(numbers)}")
    return numbers


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "out"
    weights: Optional[str] = None
    feature_mode: str = "handcrafted"
    projection_mode: str = "intensity"
    long_side: int = 840
    theta_c: float = 0.2
    rho: float = 8.0
    delta_d: float = 0.05
    window: int = 5
    sim_temperature: float = 0.1
    fine_temperature: float = 1.0
    use_repeatability: bool = True
    mnn_source: str = "fused"
    fill_radius: float = 8.0
    densify_radius: float = 0.0
    inlier_threshold: float = 4.0
    max_iters: int = 1000
    confidence: float = 0.999
    epi_thresh: float = 1e-3
    rot_thresh: float = 5.0
    trans_thresh: float = 2.0
    max_translation: float = 1.0
    max_rotation: float = 10.0
    scenes: int = 0
    samples: Optional[str] = None
    jobs: int = 1
    cache_dir: Optional[str] = None
    squared_fine_loss: bool = False
    scene: SceneConfig = field(default_factory=street_scene_config)
    explicit: frozenset = frozenset()

    @classmethod
    def keys(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls) if f.name not in ("scene", "explicit"))

    def with_values(self, values: Mapping[str, Any]) -> "RunConfig":
        """
        Apply typed overrides (strings are parsed), remembering which keys
        were set explicitly
        """
        updates: Dict[str, Any] = {}
        defaults = {f.name: f.default for f in fields(self)}
        for key, value in values.items():
            if value is None:
                continue
            if key not in defaults or key in ("scene", "explicit"):
                raise InvalidConfig(f"unknown configuration key {key!r}")
            updates[key] = _coerce(key, defaults[key], value)
        return replace(self, **updates, explicit=self.explicit | frozenset(updates))

    def effective(self) -> "RunConfig":
        """Resolve the hand-crafted preset for keys left at their defaults"""
        if self.feature_mode != "handcrafted":
            return self
        preset = {k: v for k, v in HANDCRAFTED_PRESET.items() if k not in self.explicit}
        return replace(self, **preset)

    def validate(self, check_paths: bool = True) -> "RunConfig":
        """
        Check ranges and referenced paths

        Raises:
            InvalidConfig naming the offending key
        """
        def need(ok: bool, key: str, message: str):
            if not ok:
                raise InvalidConfig(f"{key}: {message} (got {getattr(self, key)!r})")

        need(self.feature_mode in FEATURE_MODES, "feature_mode", f"must be one of {FEATURE_MODES}")
        need(self.projection_mode in PROJECTION_MODES, "projection_mode",
             f"must be one of {PROJECTION_MODES}")
        need(self.mnn_source in MNN_SOURCES, "mnn_source", f"must be one of {MNN_SOURCES}")
        need(0.0 < self.theta_c < 1.0, "theta_c", "must lie in (0, 1)")
        need(self.sim_temperature > 0, "sim_temperature", "must be > 0")
        need(self.fine_temperature > 0, "fine_temperature", "must be > 0")
        need(self.window >= 3 and self.window % 2 == 1, "window", "must be odd and >= 3")
        need(0.0 < self.confidence < 1.0, "confidence", "must lie in (0, 1)")
        need(self.rho > 0, "rho", "must be > 0")
        need(self.delta_d > 0, "delta_d", "must be > 0")
        need(self.fill_radius >= 0, "fill_radius", "must be >= 0")
        need(self.densify_radius >= 0, "densify_radius", "must be >= 0")
        need(self.inlier_threshold > 0, "inlier_threshold", "must be > 0")
        need(self.max_iters >= 1, "max_iters", "must be >= 1")
        need(self.long_side >= 0, "long_side", "must be >= 0 (0 keeps the native size)")
        need(self.epi_thresh > 0, "epi_thresh", "must be > 0")
        need(self.rot_thresh > 0, "rot_thresh", "must be > 0")
        need(self.trans_thresh > 0, "trans_thresh", "must be > 0")
        need(self.max_translation >= 0, "max_translation", "must be >= 0")
        need(self.max_rotation >= 0, "max_rotation", "must be >= 0")
        need(self.scenes >= 0, "scenes", "must be >= 0")
        need(self.jobs >= 1, "jobs", "must be >= 1")
        need(self.feature_mode != "learned" or self.weights is not None, "weights",
             "learned features need a weight file")
        if check_paths:
            for key in ("weights", "samples"):
                path = getattr(self, key)
                need(path is None or Path(path).exists(), key, "file does not exist")
        self.scene.validate()
        return self

    def as_dict(self) -> Dict[str, Any]:
        return {key: getattr(self, key) for key in self.keys()}


def _coerce(key: str, default: Any, value: Any) -> Any:
    """Parse a text value to the type of the field default"""
    if not isinstance(value, str):
        return value
    text = value.strip()
    try:
        if isinstance(default, bool):
            return _parse_bool(key, text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as e:
        raise InvalidConfig(f"{key}: {e}") from e
    return None if text.lower() in ("", "none") else text


def _primitive(value: str):
    parts = value.split()
    kind, numbers = parts[0].lower(), _floats("primitive", " ".join(parts[1:]))
    if kind == "plane" and len(numbers) == 10:
        return Plane(tuple(numbers[0:3]), tuple(numbers[3:6]), numbers[6], numbers[7],
                     numbers[8], numbers[9])
    if kind == "box" and len(numbers) == 8:
        return Box(tuple(numbers[0:3]), tuple(numbers[3:6]), numbers[6], numbers[7])
    raise InvalidConfig(
        "primitive: expected 'plane cx cy cz nx ny nz half_u half_v refl stripe' "
        f"or 'box lx ly lz hx hy hz refl stripe', got {value!r}"
    )


SCENE_SCALARS = {
    "points": int, "stripe_period": float, "range_noise": float, "beams": int,
    "azimuth_fov": float, "max_range": float, "layout_jitter": float, "shading": float,
}
SCENE_KEYS = frozenset(SCENE_SCALARS) | {
    "scene_preset", "primitive", "elevation_range", "intrinsics", "gt_pose", "gt_yaw_pitch_roll",
    "gt_translation",
}


def scene_config_from_pairs(pairs: Iterable[Tuple[str, str]],
                            base: Optional[SceneConfig] = None) -> SceneConfig:
    """
    Scene parameters from key-value pairs

    `scene_preset = street | empty` picks the starting point; any
    `primitive` line replaces the preset's primitives (all lines are kept
    in order).
    """
    pairs = list(pairs)
    config = replace(base) if base is not None else street_scene_config()
    for key, value in pairs:
        if key == "scene_preset":
            if value == "street":
                config = street_scene_config()
            elif value == "empty":
                config = SceneConfig()
            else:
                raise InvalidConfig(f"scene_preset: unknown preset {value!r}")

    primitives = [_primitive(v) for k, v in pairs if k == "primitive"]
    if primitives:
        config = replace(config, primitives=primitives)
    ypr, translation, gt_pose = None, None, None
    for key, value in pairs:
        try:
            if key in SCENE_SCALARS:
                config = replace(config, **{key: SCENE_SCALARS[key](value)})
            elif key == "elevation_range":
                config = replace(config, elevation_range=tuple(_floats(key, value, 2)))
            elif key == "intrinsics":
                fx, fy, cx, cy, w, h = _floats(key, value, 6)
                config = replace(config, intrinsics=CameraIntrinsics(fx, fy, cx, cy, int(w), int(h)))
            elif key == "gt_yaw_pitch_roll":
                ypr = _floats(key, value, 3)
            elif key == "gt_translation":
                translation = _floats(key, value, 3)
            elif key == "gt_pose":
                gt_pose = RigidTransform.from_matrix(np.array(_floats(key, value, 12)).reshape(3, 4),
                                                     project=True)
        except ValueError as e:
            raise InvalidConfig(f"{key}: {e}") from e
    if gt_pose is not None:
        config = replace(config, gt_extrinsics=gt_pose)
    elif ypr is not None or translation is not None:
        default = SceneConfig().gt_extrinsics
        config = replace(config, gt_extrinsics=RigidTransform.from_yaw_pitch_roll(
            *(ypr if ypr is not None else (0.3, 0.5, 0.0)),
            translation=translation if translation is not None else default.translation,
        ))
    return config


def format_scene_config(config: SceneConfig) -> str:
    """Inverse of scene_config_from_pairs (gt pose written as a full matrix)"""
    lines = [f"{key} = {getattr(config, key)!r}" for key in SCENE_SCALARS]
    lines.append("elevation_range = " + " ".join(repr(float(v)) for v in config.elevation_range))
    K = config.intrinsics
    lines.append(f"intrinsics = {K.fx!r} {K.fy!r} {K.cx!r} {K.cy!r} {K.width} {K.height}")
    lines.append("gt_pose = " + " ".join(f"{v:.17g}" for v in config.gt_extrinsics.as_matrix()[:3].reshape(-1)))
    for prim in config.primitives:
        if isinstance(prim, Plane):
            numbers = [*prim.center, *prim.normal, prim.half_u, prim.half_v,
                       prim.reflectance, prim.stripe_reflectance]
            lines.append("primitive = plane " + " ".join(repr(float(v)) for v in numbers))
        else:
            numbers = [*prim.lo, *prim.hi, prim.reflectance, prim.stripe_reflectance]
            lines.append("primitive = box " + " ".join(repr(float(v)) for v in numbers))
    return "\n".join(lines) + "\n"


def load_run_config(
    path: Optional[PathLike] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    Build a RunConfig: defaults, then the file, then overrides, then REG_SEED

    Scene keys in the file configure the synthetic scene generator.
    Unknown keys raise InvalidConfig.
    """
    config = RunConfig()
    if path is not None:
        pairs = read_key_values(path)
        run_values: Dict[str, str] = {}
        scene_pairs = []
        for key, value in pairs:
            if key in SCENE_KEYS:
                scene_pairs.append((key, value))
            elif key in RunConfig.keys():
                run_values[key] = value
            else:
                raise InvalidConfig(f"{path}: unknown configuration key {key!r}")
        config = config.with_values(run_values)
        if scene_pairs:
            config = replace(config, scene=scene_config_from_pairs(scene_pairs))
        logger.debug("Loaded %d keys from %s", len(pairs), path)
    if overrides:
        config = config.with_values(overrides)
    env = os.environ if environ is None else environ
    if env.get(SEED_ENV):
        try:
            config = config.with_values({"seed": int(env[SEED_ENV])})
        except ValueError as e:
            raise InvalidConfig(f"{SEED_ENV}: {e}") from e
    return config


def parse_sample_list(path: PathLike) -> List[Tuple[str, Path]]:
    """
    Dataset sample list: one `group scene_dir` pair per line

    Relative scene directories resolve against the list file's directory.
    """
    base = Path(path).parent
    samples = []
    for number, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InvalidConfig(f"{path}:{number}: expected 'group scene_dir'")
        group, scene_dir = parts
        samples.append((group, (base / scene_dir) if not Path(scene_dir).is_absolute() else Path(scene_dir)))
    return samples


def describe(config: RunConfig, keys: Sequence[str] = ("theta_c", "window", "sim_temperature",
                                                        "fine_temperature")) -> Dict[str, Any]:
    return {key: getattr(config, key) for key in keys}
