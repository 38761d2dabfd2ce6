# evaluation: metrics, reports and the benchmark harness
from .metrics import (
    MetricsReport, MetricsRow, PoseErrors, PrecisionResult, RegistrationResult,
    accuracy, build_report, matching_precision, pose_errors, rotation_angle, summarize,
    symmetric_epipolar_distance,
)
from .report import format_csv, format_samples_csv, format_text, write_report
from .benchmark import BenchmarkSample, build_samples, run_benchmark, run_sample

__all__ = [
    'MetricsReport', 'MetricsRow', 'PoseErrors', 'PrecisionResult', 'RegistrationResult',
    'accuracy', 'build_report', 'matching_precision', 'pose_errors', 'rotation_angle', 'summarize',
    'symmetric_epipolar_distance',
    'format_csv', 'format_samples_csv', 'format_text', 'write_report',
    'BenchmarkSample', 'build_samples', 'run_benchmark', 'run_sample',
]
