"""
Run configuration, scene keys, sample lists and exit codes
"""

from pathlib import Path

import numpy as np
import pytest

from lidarcam_reg.config import (
    HANDCRAFTED_PRESET, RunConfig, format_scene_config, load_run_config, parse_key_values,
    parse_sample_list, read_key_values, scene_config_from_pairs,
)
from lidarcam_reg.errors import (
    EXIT_INVALID_CONFIG, EXIT_IO_ERROR, EXIT_REGISTRATION_FAILURE, FormatError, InvalidConfig,
    InsufficientCorrespondences, NoConsensus, exit_code_for,
)
from lidarcam_reg.scene import Box, Plane


class TestKeyValues:

    def test_comments_and_order(self):
        pairs = parse_key_values("# header\ntheta_c = 0.3  # inline\n\nprimitive = a\nprimitive = b\n")
        assert pairs == [("theta_c", "0.3"), ("primitive", "a"), ("primitive", "b")]

    def test_missing_equals(self):
        with pytest.raises(InvalidConfig, match=":2:"):
            parse_key_values("seed = 1\nwindow 5\n")


class TestRunConfig:

    def test_coercion(self):
        config = RunConfig().with_values({"seed": "7", "theta_c": "0.3", "use_repeatability": "off",
                                          "weights": "w.xmrw", "fill_radius": "3"})
        assert (config.seed, config.theta_c, config.use_repeatability) == (7, 0.3, False)
        assert config.weights == "w.xmrw" and config.fill_radius == 3.0
        assert config.explicit == {"seed", "theta_c", "use_repeatability", "weights", "fill_radius"}

    @pytest.mark.parametrize("values", [{"bogus": "1"}, {"seed": "x"}, {"use_repeatability": "maybe"}])
    def test_bad_values(self, values):
        with pytest.raises(InvalidConfig):
            RunConfig().with_values(values)

    def test_handcrafted_preset_fills_defaults_only(self):
        config = RunConfig().with_values({"theta_c": "0.3"}).effective()
        assert config.theta_c == 0.3
        assert config.sim_temperature == HANDCRAFTED_PRESET["sim_temperature"]
        assert config.densify_radius == HANDCRAFTED_PRESET["densify_radius"]

    def test_learned_mode_keeps_defaults(self):
        config = RunConfig().with_values({"feature_mode": "learned", "weights": "w"}).effective()
        assert config.sim_temperature == 0.1 and config.theta_c == 0.2

    @pytest.mark.parametrize("key,value", [
        ("theta_c", "1.5"), ("window", "4"), ("confidence", "1"), ("jobs", "0"),
        ("feature_mode", "deep"), ("mnn_source", "both"), ("long_side", "-1"),
    ])
    def test_validate_names_the_key(self, key, value):
        with pytest.raises(InvalidConfig, match=key):
            RunConfig().with_values({key: value}).validate(check_paths=False)

    def test_learned_needs_weights(self):
        with pytest.raises(InvalidConfig, match="weights"):
            RunConfig().with_values({"feature_mode": "learned"}).validate(check_paths=False)

    def test_missing_weight_file(self, tmp_path):
        config = RunConfig().with_values({"weights": str(tmp_path / "none.xmrw")})
        with pytest.raises(InvalidConfig, match="does not exist"):
            config.validate()


class TestLoadRunConfig:

    def test_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = 3\ntheta_c = 0.4\nwindow = 7\n")
        config = load_run_config(path, {"theta_c": "0.5"}, environ={"REG_SEED": "11"})
        assert (config.seed, config.theta_c, config.window) == (11, 0.5, 7)

    def test_empty_seed_variable_is_ignored(self, tmp_path):
        assert load_run_config(None, {"seed": 2}, environ={"REG_SEED": ""}).seed == 2

    def test_unknown_key_in_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("speed = 3\n")
        with pytest.raises(InvalidConfig, match="speed"):
            load_run_config(path, environ={})

    def test_scene_keys(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "points = 500\n"
            "primitive = plane 0 0 10 0 0 -1 5 5 0.2 0.8\n"
            "primitive = box -1 -1 4 1 1 6 0.5 0.9\n"
            "gt_yaw_pitch_roll = 90 0 0\n"
            "intrinsics = 50 50 32 24 64 48\n"
        )
        scene = load_run_config(path, environ={}).scene
        assert scene.points == 500
        assert isinstance(scene.primitives[0], Plane) and isinstance(scene.primitives[1], Box)
        assert scene.intrinsics.width == 64
        np.testing.assert_allclose(scene.gt_extrinsics.apply(np.array([0.0, 0.0, 1.0]))
                                   - scene.gt_extrinsics.translation, [1.0, 0.0, 0.0], atol=1e-12)

    def test_bad_primitive(self):
        with pytest.raises(InvalidConfig, match="primitive"):
            scene_config_from_pairs([("primitive", "sphere 0 0 0 1")])

    def test_scene_text_round_trip(self, tmp_path):
        scene = scene_config_from_pairs([("primitive", "box -1 -1 4 1 1 6 0.5 0.9"), ("beams", "16")])
        path = tmp_path / "scene.txt"
        path.write_text(format_scene_config(scene))
        again = scene_config_from_pairs(read_key_values(path))
        assert again.primitives == scene.primitives
        assert again.beams == 16 and again.intrinsics == scene.intrinsics
        assert again.gt_extrinsics.allclose(scene.gt_extrinsics, atol=1e-12)


def test_sample_list_paths(tmp_path):
    (tmp_path / "lists").mkdir()
    path = tmp_path / "lists" / "samples.txt"
    path.write_text("# group dir\ncity scenes/a\nroad /abs/b\n")
    assert parse_sample_list(path) == [("city", tmp_path / "lists" / "scenes" / "a"),
                                       ("road", Path("/abs/b"))]


@pytest.mark.parametrize("error,code", [
    (InvalidConfig("x"), EXIT_INVALID_CONFIG),
    (FormatError("x"), EXIT_IO_ERROR),
    (FileNotFoundError("x"), EXIT_IO_ERROR),
    (InsufficientCorrespondences("x"), EXIT_REGISTRATION_FAILURE),
    (NoConsensus("x"), EXIT_REGISTRATION_FAILURE),
    (ValueError("x"), EXIT_REGISTRATION_FAILURE),
])
def test_exit_codes(error, code):
    assert exit_code_for(error) == code
