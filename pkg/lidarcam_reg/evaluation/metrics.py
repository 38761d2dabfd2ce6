"""
Registration metrics
Relative pose errors, Acc@thresholds and matching precision
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import FAILURE_REASONS, EmptyResults, InvalidConfig
from ..geometry.camera import CameraIntrinsics
from ..geometry.formats import format_pose, parse_pose
from ..geometry.transforms import RigidTransform
from ..matching.dump import MatchRecords
from ..matching.refine import FineMatchSet

logger = logging.getLogger(__name__)

DEFAULT_ROT_THRESH = 5.0
DEFAULT_TRANS_THRESH = 2.0
DEFAULT_EPI_THRESH = 1e-3
PURE_ROTATION_EPS = 1e-9

# camera frame, Y up: yaw about Y, pitch about X, roll about Z
EULER_SEQUENCE = "YXZ"
AXES = ("yaw", "pitch", "roll", "x", "y", "z")


@dataclass(frozen=True)
class PoseErrors:
    e_t: float
    e_r: float
    yaw: float
    pitch: float
    roll: float
    x: float
    y: float
    z: float

    def axis(self, name: str) -> float:
        return getattr(self, name)


def rotation_angle(rotation: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix in degrees"""
    # atan2 keeps full precision near 0° and 180° where arccos of the trace does not
    r = np.asarray(rotation, dtype=np.float64)
    sin2 = np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    cos2 = np.trace(r) - 1.0
    return float(np.degrees(np.arctan2(sin2, cos2)))


def pose_errors(est: RigidTransform, gt: RigidTransform) -> PoseErrors:
    """
    Errors of est against gt through the residual gt⁻¹ ∘ est

    Returns:
        PoseErrors; translation in meters, rotations in degrees, per-axis
        values are magnitudes
    """
    delta = gt.inverse() @ est
    yaw, pitch, roll = np.abs(Rotation.from_matrix(delta.rotation).as_euler(EULER_SEQUENCE, degrees=True))
    x, y, z = np.abs(delta.translation)
    return PoseErrors(
        e_t=float(np.linalg.norm(delta.translation)),
        e_r=rotation_angle(delta.rotation),
        yaw=float(yaw), pitch=float(pitch), roll=float(roll),
        x=float(x), y=float(y), z=float(z),
    )


@dataclass(frozen=True)
class RegistrationResult:
    """Outcome of one benchmark sample: an estimate or a failure reason"""

    sample_id: str
    gt: RigidTransform
    estimate: Optional[RigidTransform] = None
    failure: Optional[str] = None
    group: str = "all"
    precision: Optional[float] = None
    matches: int = 0
    inliers: int = 0

    def __post_init__(self):
        if (self.estimate is None) == (self.failure is None):
            raise InvalidConfig(f"{self.sample_id}: exactly one of estimate/failure must be set")
        if self.failure is not None and self.failure not in FAILURE_REASONS:
            raise InvalidConfig(f"{self.sample_id}: unknown failure reason {self.failure!r}")

    @property
    def failed(self) -> bool:
        return self.failure is not None

    @property
    def errors(self) -> Optional[PoseErrors]:
        return None if self.estimate is None else pose_errors(self.estimate, self.gt)

    def succeeded(self, rot_thresh: float = DEFAULT_ROT_THRESH,
                  trans_thresh: float = DEFAULT_TRANS_THRESH) -> bool:
        err = self.errors
        return err is not None and err.e_r < rot_thresh and err.e_t < trans_thresh

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "group": self.group,
            "gt": format_pose(self.gt),
            "estimate": None if self.estimate is None else format_pose(self.estimate),
            "failure": self.failure,
            "precision": self.precision,
            "matches": self.matches,
            "inliers": self.inliers,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RegistrationResult":
        estimate = data.get("estimate")
        return cls(
            sample_id=data["sample_id"],
            gt=parse_pose(data["gt"], "<cached gt>"),
            estimate=None if estimate is None else parse_pose(estimate, "<cached estimate>"),
            failure=data.get("failure"),
            group=data.get("group", "all"),
            precision=data.get("precision"),
            matches=int(data.get("matches", 0)),
            inliers=int(data.get("inliers", 0)),
        )


def accuracy(results: Sequence[RegistrationResult], rot_thresh: float = DEFAULT_ROT_THRESH,
             trans_thresh: float = DEFAULT_TRANS_THRESH) -> float:
    """Fraction with e_r < rot_thresh and e_t < trans_thresh; failures count as misses"""
    if not results:
        raise EmptyResults("accuracy of an empty result list")
    hits = sum(1 for r in results if r.succeeded(rot_thresh, trans_thresh))
    return hits / len(results)


# Matching precision

@dataclass(frozen=True)
class PrecisionResult:
    precision: float
    correct: int
    total: int
    empty: bool = False
    rotation_only: bool = False
    distances: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)


def normalized_coordinates(pixels: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """N×2 pixels -> N×3 homogeneous normalized image coordinates"""
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    x = (px[:, 0] - K.cx) / K.fx
    y = (px[:, 1] - K.cy) / K.fy
    return np.stack([x, y, np.ones_like(x)], axis=1)


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _line_distance(points: np.ndarray, lines: np.ndarray, residual: np.ndarray) -> np.ndarray:
    norm = np.hypot(lines[:, 0], lines[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.abs(residual) / norm
    # a point at the epipole lies on every line
    d[norm == 0] = np.where(residual[norm == 0] == 0, 0.0, np.inf)
    return d


def symmetric_epipolar_distance(x0: np.ndarray, x1: np.ndarray, relative: RigidTransform) -> np.ndarray:
    """
    Sum of point-to-epipolar-line distances in both views

    Args:
        x0, x1: N×3 normalized coordinates in the source and target view
        relative: source -> target pose (X1 = R·X0 + t)
    """
    E = skew(relative.translation) @ relative.rotation
    l1 = x0 @ E.T
    l0 = x1 @ E
    residual = np.sum(x1 * l1, axis=1)
    return _line_distance(x1, l1, residual) + _line_distance(x0, l0, residual)


def symmetric_transfer_distance(x0: np.ndarray, x1: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Pure rotation: x1 ~ R·x0; distances of both transfers in normalized coordinates"""

    def transfer(src, dst, r):
        mapped = src @ r.T
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = mapped[:, :2] / mapped[:, 2:3]
        d = np.linalg.norm(uv - dst[:, :2], axis=1)
        d[~(mapped[:, 2] > 0)] = np.inf
        return d

    return transfer(x0, x1, rotation) + transfer(x1, x0, rotation.T)


def matching_precision(
    matches: Union[FineMatchSet, MatchRecords],
    relative: RigidTransform,
    K_lidar: CameraIntrinsics,
    K_cam: CameraIntrinsics,
    epi_thresh: float = DEFAULT_EPI_THRESH,
) -> PrecisionResult:
    """
    Share of matches consistent with the ground-truth relative geometry

    Args:
        matches: LiDAR-view pixel -> camera pixel pairs
        relative: LiDAR view -> camera pose
        K_lidar, K_cam: intrinsics of the two views
        epi_thresh: bound on the symmetric distance (normalized coordinates)

    Returns:
        PrecisionResult; an empty match set gives precision 0 and empty=True
    """
    if epi_thresh <= 0:
        raise InvalidConfig(f"epi_thresh must be positive, got {epi_thresh}")
    total = len(matches.lidar_px)
    if total == 0:
        return PrecisionResult(0.0, 0, 0, empty=True)
    x0 = normalized_coordinates(matches.lidar_px, K_lidar)
    x1 = normalized_coordinates(matches.cam_px, K_cam)
    rotation_only = float(np.linalg.norm(relative.translation)) < PURE_ROTATION_EPS
    if rotation_only:
        d = symmetric_transfer_distance(x0, x1, relative.rotation)
    else:
        d = symmetric_epipolar_distance(x0, x1, relative)
    correct = int(np.sum(d < epi_thresh))
    return PrecisionResult(correct / total, correct, total, False, rotation_only, d)


# Aggregation

@dataclass(frozen=True)
class MetricsRow:
    """Aggregates over one set of samples; error statistics skip failures"""

    label: str
    count: int
    failures: int
    e_t_mean: float
    e_t_std: float
    e_r_mean: float
    e_r_std: float
    axes: Dict[str, float]
    acc: float
    precision: float
    failure_rate: float

    def as_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        axes = out.pop("axes")
        out.update({f"{k}_mean": v for k, v in axes.items()})
        return out


def _stats(values: List[float]):
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def summarize(results: Sequence[RegistrationResult], label: str = "all",
              rot_thresh: float = DEFAULT_ROT_THRESH,
              trans_thresh: float = DEFAULT_TRANS_THRESH) -> MetricsRow:
    if not results:
        raise EmptyResults(f"no samples in {label!r}")
    errors = [r.errors for r in results if not r.failed]
    e_t_mean, e_t_std = _stats([e.e_t for e in errors])
    e_r_mean, e_r_std = _stats([e.e_r for e in errors])
    axes = {name: _stats([e.axis(name) for e in errors])[0] for name in AXES}
    precisions = [r.precision for r in results if r.precision is not None]
    failures = sum(1 for r in results if r.failed)
    return MetricsRow(
        label=label,
        count=len(results),
        failures=failures,
        e_t_mean=e_t_mean, e_t_std=e_t_std,
        e_r_mean=e_r_mean, e_r_std=e_r_std,
        axes=axes,
        acc=accuracy(results, rot_thresh, trans_thresh),
        precision=float(np.mean(precisions)) if precisions else math.nan,
        failure_rate=failures / len(results),
    )


@dataclass(frozen=True)
class MetricsReport:
    overall: MetricsRow
    groups: List[MetricsRow]
    results: List[RegistrationResult]
    rot_thresh: float = DEFAULT_ROT_THRESH
    trans_thresh: float = DEFAULT_TRANS_THRESH
    epi_thresh: float = DEFAULT_EPI_THRESH

    @property
    def acc(self) -> float:
        return self.overall.acc

    @property
    def failure_rate(self) -> float:
        return self.overall.failure_rate


def build_report(results: Sequence[RegistrationResult],
                 rot_thresh: float = DEFAULT_ROT_THRESH,
                 trans_thresh: float = DEFAULT_TRANS_THRESH,
                 epi_thresh: float = DEFAULT_EPI_THRESH) -> MetricsReport:
    """Overall row plus one row per group (groups in first-seen order), samples sorted by id"""
    ordered = sorted(results, key=lambda r: r.sample_id)
    overall = summarize(ordered, "all", rot_thresh, trans_thresh)
    labels = list(dict.fromkeys(r.group for r in ordered))
    groups = []
    if len(labels) > 1:
        groups = [summarize([r for r in ordered if r.group == g], g, rot_thresh, trans_thresh)
                  for g in labels]
    logger.info("✓ %d samples: Acc %.4f, e_r %.4f°, e_t %.4f m, %d failures",
                overall.count, overall.acc, overall.e_r_mean, overall.e_t_mean, overall.failures)
    return MetricsReport(overall, groups, list(ordered), rot_thresh, trans_thresh, epi_thresh)
