"""
Pose errors, Acc, matching precision, aggregation and report files
"""

import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from lidarcam_reg.errors import EmptyResults, InvalidConfig
from lidarcam_reg.evaluation import (
    RegistrationResult, accuracy, build_report, format_csv, format_samples_csv, format_text,
    matching_precision, pose_errors, summarize, symmetric_epipolar_distance, write_report,
)
from lidarcam_reg.evaluation.metrics import normalized_coordinates
from lidarcam_reg.evaluation.report import CSV_COLUMNS, SAMPLE_COLUMNS
from lidarcam_reg.geometry import CameraIntrinsics, RigidTransform, back_project, project_points
from lidarcam_reg.matching import MatchRecords

K = CameraIntrinsics(300.0, 300.0, 320.0, 240.0, 640, 480)
GT = RigidTransform.from_yaw_pitch_roll(1.0, -2.0, 0.5, translation=(0.1, -0.2, 0.3))


def result(sample_id: str, residual=None, group: str = "all", failure=None, precision=None):
    estimate = None if residual is None else GT @ residual
    return RegistrationResult(sample_id, GT, estimate=estimate, failure=failure, group=group,
                              precision=precision)


def residual(rot: float, trans: float) -> RigidTransform:
    return RigidTransform.from_yaw_pitch_roll(rot, translation=(trans, 0.0, 0.0))


def matches_for(relative: RigidTransform, n: int, seed: int) -> MatchRecords:
    rng = np.random.default_rng(seed)
    u = rng.uniform(50, 590, n)
    v = rng.uniform(50, 430, n)
    pts = back_project(u, v, rng.uniform(5, 30, n), K)
    uv, _ = project_points(pts, relative, K)
    return MatchRecords(np.column_stack([u, v]), uv, np.ones(n), np.ones(n))


class TestPoseErrors:

    def test_translation_and_angle(self):
        err = pose_errors(GT @ RigidTransform.from_yaw_pitch_roll(3.0, translation=(0.3, 0.0, 0.4)), GT)
        assert err.e_t == pytest.approx(0.5)
        assert err.e_r == pytest.approx(3.0)
        assert (err.yaw, err.pitch, err.roll) == pytest.approx((3.0, 0.0, 0.0), abs=1e-9)
        assert (err.x, err.y, err.z) == pytest.approx((0.3, 0.0, 0.4))

    def test_per_axis_magnitudes(self):
        err = pose_errors(GT @ RigidTransform.from_yaw_pitch_roll(-3.0, 2.0, -1.0), GT)
        assert (err.yaw, err.pitch, err.roll) == pytest.approx((3.0, 2.0, 1.0))

    def test_identity(self):
        err = pose_errors(GT, GT)
        assert err.e_t == pytest.approx(0.0, abs=1e-12) and err.e_r == pytest.approx(0.0, abs=1e-5)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50)
    def test_matches_quaternion_angle(self, seed):
        rng = np.random.default_rng(seed)
        q_gt, q_est = Rotation.random(2, random_state=seed).as_quat()
        gt = RigidTransform(Rotation.from_quat(q_gt).as_matrix(), rng.uniform(-5, 5, 3))
        est = RigidTransform(Rotation.from_quat(q_est).as_matrix(), rng.uniform(-5, 5, 3))
        err = pose_errors(est, gt)

        # conj(q_gt) ⊗ q_est, scalar-last
        x1, y1, z1, w1 = -q_gt[0], -q_gt[1], -q_gt[2], q_gt[3]
        x2, y2, z2, w2 = q_est
        w = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2
        v = np.array([w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                      w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                      w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2])
        angle = math.degrees(2.0 * math.atan2(np.linalg.norm(v), abs(w)))
        assert err.e_r == pytest.approx(angle, abs=1e-9)
        expected_t = np.linalg.norm(gt.rotation.T @ (est.translation - gt.translation))
        assert err.e_t == pytest.approx(expected_t, abs=1e-9)

    @pytest.mark.parametrize("degrees", [1e-6, 1e-3, 90.0, 179.999, 180.0])
    def test_small_and_half_turn_angles(self, degrees):
        est = GT @ RigidTransform(Rotation.from_rotvec([0.0, 0.0, math.radians(degrees)]).as_matrix(),
                                  np.zeros(3))
        assert pose_errors(est, GT).e_r == pytest.approx(degrees, abs=1e-9)


class TestRegistrationResult:

    def test_exactly_one_outcome(self):
        with pytest.raises(InvalidConfig):
            RegistrationResult("0", GT)
        with pytest.raises(InvalidConfig):
            RegistrationResult("0", GT, estimate=GT, failure="NoConsensus")

    def test_unknown_failure(self):
        with pytest.raises(InvalidConfig):
            RegistrationResult("0", GT, failure="Timeout")

    def test_dict_round_trip(self):
        original = result("00003", residual(1.0, 0.2), group="city", precision=0.25)
        again = RegistrationResult.from_dict(original.to_dict())
        assert again.estimate.allclose(original.estimate, atol=1e-12)
        assert (again.group, again.precision, again.failure) == ("city", 0.25, None)
        failed = RegistrationResult.from_dict(result("1", failure="NoConsensus").to_dict())
        assert failed.failed and failed.errors is None


class TestAccuracy:

    def test_failures_count_as_misses(self):
        results = [result("0", residual(1.0, 0.5)), result("1", residual(4.0, 1.9)),
                   result("2", residual(6.0, 0.1)), result("3", failure="InsufficientCorrespondences")]
        assert accuracy(results) == 0.5
        assert accuracy(results, rot_thresh=10.0) == 0.75

    def test_thresholds_are_strict(self):
        r = result("0", residual(1.0, 1.5))
        assert accuracy([r], trans_thresh=r.errors.e_t) == 0.0
        assert accuracy([r], rot_thresh=r.errors.e_r) == 0.0

    def test_empty(self):
        with pytest.raises(EmptyResults):
            accuracy([])


class TestMatchingPrecision:

    def test_exact_matches_are_correct(self):
        relative = RigidTransform.from_yaw_pitch_roll(2.0, 1.0, 0.0, translation=(0.5, 0.0, 0.1))
        precision = matching_precision(matches_for(relative, 50, 0), relative, K, K)
        assert precision.precision == 1.0 and precision.total == 50
        assert not precision.rotation_only

    def test_corrupted_matches(self):
        relative = RigidTransform.from_yaw_pitch_roll(2.0, translation=(0.5, 0.0, 0.0))
        records = matches_for(relative, 40, 1)
        cam = records.cam_px.copy()
        # move the first ten across the epipolar lines (which are nearly horizontal)
        cam[:10, 1] += 25.0
        precision = matching_precision(MatchRecords(records.lidar_px, cam, records.confidence, records.tau2),
                                       relative, K, K)
        assert precision.correct == 30 and precision.precision == pytest.approx(0.75)

    def test_pure_rotation_uses_transfer(self):
        relative = RigidTransform.from_yaw_pitch_roll(4.0)
        records = matches_for(relative, 20, 2)
        precision = matching_precision(records, relative, K, K)
        assert precision.rotation_only and precision.precision == 1.0
        shifted = MatchRecords(records.lidar_px, records.cam_px + 5.0, records.confidence, records.tau2)
        assert matching_precision(shifted, relative, K, K).precision == 0.0

    def test_empty_set(self):
        empty = MatchRecords(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0), np.zeros(0))
        precision = matching_precision(empty, GT, K, K)
        assert precision.empty and precision.precision == 0.0

    def test_distance_is_symmetric_sum(self):
        relative = RigidTransform(np.eye(3), np.array([1.0, 0.0, 0.0]))
        # horizontal epipolar lines: the distance is the vertical offset in each view
        x0 = normalized_coordinates(np.array([[320.0, 240.0]]), K)
        x1 = normalized_coordinates(np.array([[350.0, 243.0]]), K)
        d = symmetric_epipolar_distance(x0, x1, relative)
        assert d[0] == pytest.approx(2 * 3.0 / 300.0)


class TestAggregation:

    def results(self):
        return [
            result("00002", residual(2.0, 1.0), group="road", precision=0.5),
            result("00000", residual(4.0, 3.0), group="city", precision=1.0),
            result("00001", failure="NoConsensus", group="city", precision=0.0),
        ]

    def test_summary_excludes_failures_from_errors(self):
        row = summarize(self.results())
        assert row.count == 3 and row.failures == 1
        assert row.e_t_mean == pytest.approx(2.0) and row.e_t_std == pytest.approx(1.0)
        assert row.e_r_mean == pytest.approx(3.0) and row.e_r_std == pytest.approx(1.0)
        assert row.axes["yaw"] == pytest.approx(3.0)
        assert row.precision == pytest.approx(0.5)
        assert row.failure_rate == pytest.approx(1 / 3)
        assert row.acc == pytest.approx(1 / 3)

    def test_all_failed(self):
        row = summarize([result("0", failure="NoConsensus")])
        assert math.isnan(row.e_t_mean) and row.acc == 0.0 and math.isnan(row.precision)

    def test_report_groups_and_order(self):
        report = build_report(self.results())
        assert [r.sample_id for r in report.results] == ["00000", "00001", "00002"]
        assert [g.label for g in report.groups] == ["city", "road"]
        single = build_report([result("0", residual(1.0, 0.1))])
        assert single.groups == []

    def test_text_table(self):
        text = format_text(build_report(self.results()))
        lines = text.splitlines()
        assert lines[0] == "# Acc thresholds: e_r < 5 deg, e_t < 2 m; epipolar threshold 0.001"
        assert lines[1].split()[:2] == ["group", "n"]
        assert lines[3].startswith("all") and "2.0000 ± 1.0000" in lines[3]
        assert "33.33%" in lines[3]
        assert len(lines) == 6

    def test_csv_tables(self):
        report = build_report(self.results())
        rows = list(csv.reader(io.StringIO(format_csv(report))))
        assert rows[0] == list(CSV_COLUMNS) and len(rows) == 4
        assert float(rows[1][CSV_COLUMNS.index("acc")]) == pytest.approx(1 / 3)
        samples = list(csv.reader(io.StringIO(format_samples_csv(report))))
        assert samples[0] == list(SAMPLE_COLUMNS)
        failed = samples[2]
        assert failed[SAMPLE_COLUMNS.index("failure")] == "NoConsensus"
        assert failed[SAMPLE_COLUMNS.index("e_t")] == ""

    def test_write_report(self, tmp_path):
        write_report(build_report(self.results()), tmp_path / "report")
        assert sorted(p.name for p in (tmp_path / "report").iterdir()) == \
            ["metrics.csv", "metrics.txt", "samples.csv"]
