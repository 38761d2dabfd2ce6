"""
Coarse matching: repeatability scoring, cosine similarity, Dual-Softmax,
confidence fusion and mutual-nearest-neighbour extraction
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
import torch

from ..errors import DimensionMismatch, InvalidConfig, WeightShapeMismatch
from ..features.encoding import FlatFeatures
from ..features.extractor import DTYPE

logger = logging.getLogger(__name__)

# largest double below 1 and smallest positive normal: keeps sigmoid scores open
SCORE_CEIL = 1.0 - 2.0 ** -53
SCORE_FLOOR = np.finfo(np.float64).tiny

MNN_SOURCES = ("fused", "prob")


@dataclass(frozen=True)
class SimilarityMatrix:
    values: torch.Tensor
    temperature: float


@dataclass(frozen=True)
class ProbMatrix:
    values: torch.Tensor


@dataclass(frozen=True)
class ConfidenceMatrix:
    values: torch.Tensor


@dataclass(frozen=True)
class RepeatabilityMLP:
    """C → C/2 (ReLU) → 1, then sigmoid"""

    w1: torch.Tensor
    b1: torch.Tensor
    w2: torch.Tensor
    b2: torch.Tensor

    @property
    def channels(self) -> int:
        return self.w1.shape[0]

    def __post_init__(self):
        c = self.w1.shape[0]
        expected = {"w1": (c, c // 2), "b1": (c // 2,), "w2": (c // 2, 1), "b2": (1,)}
        for name, shape in expected.items():
            got = tuple(getattr(self, name).shape)
            if got != shape:
                raise WeightShapeMismatch(f"repeatability.{name}: expected {shape}, got {got}")

    @classmethod
    def from_tensors(cls, tensors: Dict[str, torch.Tensor],
                     prefix: str = "repeatability") -> "RepeatabilityMLP":
        try:
            return cls(*(tensors[f"{prefix}.{name}"].to(DTYPE) for name in ("w1", "b1", "w2", "b2")))
        except KeyError as e:
            raise WeightShapeMismatch(f"missing tensor {e.args[0]}") from e

    @classmethod
    def zeros(cls, channels: int) -> "RepeatabilityMLP":
        h = channels // 2
        return cls(torch.zeros(channels, h, dtype=DTYPE), torch.zeros(h, dtype=DTYPE),
                   torch.zeros(h, 1, dtype=DTYPE), torch.zeros(1, dtype=DTYPE))

    def to_tensors(self, prefix: str = "repeatability") -> Dict[str, torch.Tensor]:
        return {f"{prefix}.{n}": getattr(self, n) for n in ("w1", "b1", "w2", "b2")}

    def logits(self, tokens: torch.Tensor) -> torch.Tensor:
        hidden = torch.relu(tokens.to(DTYPE) @ self.w1 + self.b1)
        return (hidden @ self.w2 + self.b2)[:, 0]


@dataclass(frozen=True)
class RepeatabilityMap:
    """Per-lidar-cell scores; logits kept when produced by the MLP"""

    scores: torch.Tensor
    logits: Optional[torch.Tensor] = None

    def __len__(self) -> int:
        return self.scores.shape[0]

    @classmethod
    def from_logits(cls, logits: torch.Tensor) -> "RepeatabilityMap":
        scores = torch.sigmoid(logits).clamp(SCORE_FLOOR, SCORE_CEIL)
        return cls(scores, logits)

    @classmethod
    def constant(cls, n: int, value: float) -> "RepeatabilityMap":
        return cls(torch.full((n,), float(value), dtype=DTYPE))

    @classmethod
    def from_validity(cls, fractions: torch.Tensor) -> "RepeatabilityMap":
        """Validity prior: fraction of LiDAR-covered pixels, kept inside (0, 1)"""
        return cls(fractions.to(DTYPE).clamp(SCORE_FLOOR, SCORE_CEIL))


def _tokens(x: Union[FlatFeatures, torch.Tensor]) -> torch.Tensor:
    return (x.tokens if isinstance(x, FlatFeatures) else torch.as_tensor(x)).to(DTYPE)


def cosine_similarity(a: Union[FlatFeatures, torch.Tensor], b: Union[FlatFeatures, torch.Tensor],
                      temperature: float) -> SimilarityMatrix:
    """⟨aᵢ, bⱼ⟩ / (‖aᵢ‖‖bⱼ‖·temperature); zero-norm tokens give zero rows/cols"""
    if temperature <= 0:
        raise InvalidConfig(f"temperature must be > 0, got {temperature}")
    ta, tb = _tokens(a), _tokens(b)
    if ta.shape[1] != tb.shape[1]:
        raise DimensionMismatch(f"channel counts differ: {ta.shape[1]} vs {tb.shape[1]}")
    na = ta.norm(dim=1, keepdim=True)
    nb = tb.norm(dim=1, keepdim=True)
    ua = torch.where(na > 0, ta / torch.where(na > 0, na, torch.ones_like(na)), torch.zeros_like(ta))
    ub = torch.where(nb > 0, tb / torch.where(nb > 0, nb, torch.ones_like(nb)), torch.zeros_like(tb))
    values = (ua @ ub.T).clamp(-1.0, 1.0) / temperature
    return SimilarityMatrix(values, temperature)


def dual_softmax(sim: SimilarityMatrix) -> ProbMatrix:
    """Row softmax times column softmax (each with max subtraction)"""
    v = sim.values
    if v.numel() == 0:
        return ProbMatrix(v.clone())
    if not torch.isfinite(v).all():
        raise InvalidConfig("similarity matrix has non-finite entries")
    return ProbMatrix(torch.softmax(v, dim=1) * torch.softmax(v, dim=0))


def repeatability(flat_lidar_enhanced: Union[FlatFeatures, torch.Tensor],
                  mlp: RepeatabilityMLP) -> RepeatabilityMap:
    tokens = _tokens(flat_lidar_enhanced)
    if tokens.shape[1] != mlp.channels:
        raise WeightShapeMismatch(
            f"repeatability MLP expects {mlp.channels} channels, tokens have {tokens.shape[1]}"
        )
    return RepeatabilityMap.from_logits(mlp.logits(tokens))


def fuse_confidence(p: ProbMatrix, r: Optional[RepeatabilityMap]) -> ConfidenceMatrix:
    """S(i, j) = P_c(i, j)·S_rep(i); r=None bypasses fusion (S = P_c)"""
    if r is None:
        return ConfidenceMatrix(p.values.clone())
    if p.values.shape[0] != len(r):
        raise DimensionMismatch(f"{p.values.shape[0]} rows but {len(r)} repeatability scores")
    return ConfidenceMatrix(p.values * r.scores.to(p.values.dtype)[:, None])


@dataclass(frozen=True)
class CoarseMatchSet:
    lidar_index: np.ndarray
    cam_index: np.ndarray
    confidence: np.ndarray
    threshold: float
    row_ties: int = 0
    col_ties: int = 0
    lidar_grid: Optional[Tuple[int, int]] = None
    cam_grid: Optional[Tuple[int, int]] = None

    def __len__(self) -> int:
        return len(self.lidar_index)

    def pairs(self) -> set:
        return {(int(i), int(j)) for i, j in zip(self.lidar_index, self.cam_index)}


def extract_coarse_matches(
    s: Union[ConfidenceMatrix, ProbMatrix],
    theta_c: float,
    mnn_on: Optional[Union[ConfidenceMatrix, ProbMatrix]] = None,
    lidar_grid: Optional[Tuple[int, int]] = None,
    cam_grid: Optional[Tuple[int, int]] = None,
) -> CoarseMatchSet:
    """
    Mutual nearest neighbours of s with confidence ≥ θ_c

    Args:
        s: matrix whose entries are thresholded and reported
        theta_c: confidence threshold in (0, 1)
        mnn_on: matrix the MNN test runs on (default: s itself)
        lidar_grid, cam_grid: coarse grid shapes carried to refinement

    Returns:
        CoarseMatchSet; argmax ties resolve to the smallest index and are counted
    """
    if not 0.0 < theta_c < 1.0:
        raise InvalidConfig(f"theta_c must lie in (0, 1), got {theta_c}")
    values = s.values.detach().cpu().numpy()
    mnn = values if mnn_on is None else mnn_on.values.detach().cpu().numpy()
    if mnn.shape != values.shape:
        raise DimensionMismatch(f"MNN matrix {mnn.shape} vs confidence matrix {values.shape}")
    n0, n1 = values.shape
    empty = np.zeros(0, dtype=np.int64)
    if n0 == 0 or n1 == 0:
        return CoarseMatchSet(empty, empty, np.zeros(0), theta_c, 0, 0, lidar_grid, cam_grid)

    # np.argmax returns the first maximal index
    row_best = np.argmax(mnn, axis=1)
    col_best = np.argmax(mnn, axis=0)
    row_ties = int(np.sum(np.sum(mnn == mnn.max(axis=1, keepdims=True), axis=1) > 1))
    col_ties = int(np.sum(np.sum(mnn == mnn.max(axis=0, keepdims=True), axis=0) > 1))
    if row_ties or col_ties:
        logger.warning("⚠️ argmax ties resolved by smallest index: %d rows, %d cols",
                       row_ties, col_ties)

    i = np.arange(n0)
    mutual = col_best[row_best] == i
    conf = values[i, row_best]
    keep = mutual & (conf >= theta_c)
    return CoarseMatchSet(
        lidar_index=i[keep],
        cam_index=row_best[keep],
        confidence=conf[keep],
        threshold=theta_c,
        row_ties=row_ties,
        col_ties=col_ties,
        lidar_grid=lidar_grid,
        cam_grid=cam_grid,
    )
