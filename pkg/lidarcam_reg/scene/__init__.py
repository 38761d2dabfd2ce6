# scene_synth: deterministic synthetic scenes and pose perturbations
from .prng import SplitMix64, mix64, hash_ints
from .synth import (
    Plane, Box, SceneConfig, SyntheticScene, PerturbationSpec,
    street_scene_config, generate_scene, render_depth, cast_rays, pixel_rays,
    sample_perturbation, sample_perturbations,
)

__all__ = [
    'SplitMix64', 'mix64', 'hash_ints',
    'Plane', 'Box', 'SceneConfig', 'SyntheticScene', 'PerturbationSpec',
    'street_scene_config', 'generate_scene', 'render_depth', 'cast_rays', 'pixel_rays',
    'sample_perturbation', 'sample_perturbations',
]
