"""
Training losses with analytic gradients

    L = L_c + L_f + L_r
    L_c: mean negative log confidence over ground-truth coarse pairs
    L_f: inverse-variance weighted refinement error
    L_r: binary cross-entropy of the repeatability scores
"""

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np
import torch

from ..errors import DimensionMismatch, EmptyGroundTruth, EmptyMatchSet
from ..features.extractor import DTYPE
from ..matching.coarse import ConfidenceMatrix, ProbMatrix, RepeatabilityMap
from ..matching.refine import FineMatchSet
from .ground_truth import GtMatchSet, GtRepeatabilityMap

logger = logging.getLogger(__name__)

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class LossTerm:
    """
    One loss value with its gradient

    Unpacks as (value, gradient); `terms` is the number of summands and
    `clamped` how many log arguments hit the 1e-12 floor.
    """

    value: float
    gradient: torch.Tensor
    terms: int
    clamped: int = 0

    def __iter__(self) -> Iterator:
        return iter((self.value, self.gradient))


def loss_coarse(s: Union[ConfidenceMatrix, ProbMatrix], gt: GtMatchSet) -> LossTerm:
    """
    -1/|M| Σ log S(i, j) over ground-truth pairs; gradient w.r.t. S

    Raises:
        EmptyGroundTruth when there is no ground-truth pair
    """
    if len(gt) == 0:
        raise EmptyGroundTruth("coarse loss needs at least one ground-truth pair")
    values = s.values.to(DTYPE)
    i = torch.as_tensor(gt.lidar_index, dtype=torch.long)
    j = torch.as_tensor(gt.cam_index, dtype=torch.long)
    if int(i.max()) >= values.shape[0] or int(j.max()) >= values.shape[1]:
        raise DimensionMismatch(f"ground-truth indices exceed the {tuple(values.shape)} matrix")
    picked = values[i, j]
    clamped = int((picked < LOG_CLAMP).sum())
    if clamped:
        logger.warning("⚠️ %d coarse confidences clamped at %g", clamped, LOG_CLAMP)
    safe = picked.clamp(min=LOG_CLAMP)
    m = len(gt)
    value = float(-torch.log(safe).sum() / m)
    grad = torch.zeros_like(values)
    grad.index_put_((i, j), -1.0 / (m * safe), accumulate=True)
    return LossTerm(value, grad, m, clamped)


def loss_fine(fine: FineMatchSet, gt_pixels: np.ndarray, squared: bool = False) -> LossTerm:
    """
    1/|M| Σ ‖ĵ - ĵ_gt‖ / τ² over refined matches; gradient w.r.t. the refined camera pixels

    τ² is a constant weight. The gradient of the unsquared norm at zero
    error is taken as 0.

    Args:
        fine: refined matches (cam_px, tau2)
        gt_pixels: N×2 ground-truth camera pixels
        squared: use ‖·‖² instead of ‖·‖
    """
    if len(fine) == 0:
        raise EmptyMatchSet("fine loss needs at least one refined match")
    pred = torch.as_tensor(np.asarray(fine.cam_px), dtype=DTYPE)
    target = torch.as_tensor(np.asarray(gt_pixels), dtype=DTYPE)
    if target.shape != pred.shape:
        raise DimensionMismatch(f"{tuple(target.shape)} targets for {tuple(pred.shape)} matches")
    weight = 1.0 / torch.as_tensor(np.asarray(fine.tau2), dtype=DTYPE)
    m = len(fine)
    err = pred - target
    if squared:
        value = float((weight * (err * err).sum(dim=1)).sum() / m)
        grad = 2.0 * err * weight[:, None] / m
    else:
        norm = err.norm(dim=1)
        value = float((weight * norm).sum() / m)
        scale = torch.where(norm > 0, weight / (m * torch.where(norm > 0, norm, torch.ones_like(norm))),
                            torch.zeros_like(norm))
        grad = err * scale[:, None]
    return LossTerm(value, grad, m)


def loss_repeatability(pred: RepeatabilityMap, gt: GtRepeatabilityMap) -> LossTerm:
    """
    Mean binary cross-entropy over all coarse cells

    Gradient is taken w.r.t. the pre-sigmoid logits: (σ(z) - label) / N.
    Maps built without logits use logit(score).
    """
    labels = torch.as_tensor(gt.flat.astype(np.float64), dtype=DTYPE)
    scores = pred.scores.to(DTYPE)
    if scores.shape[0] != labels.shape[0]:
        raise DimensionMismatch(f"{scores.shape[0]} scores for {labels.shape[0]} labelled cells")
    n = labels.shape[0]
    p = scores.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP)
    clamped = int(((scores < LOG_CLAMP) | (scores > 1.0 - LOG_CLAMP)).sum())
    if clamped:
        logger.debug("%d repeatability scores clamped away from {0, 1}", clamped)
    bce = -(labels * torch.log(p) + (1.0 - labels) * torch.log1p(-p))
    if pred.logits is not None:
        sig = torch.sigmoid(pred.logits.to(DTYPE))
    else:
        sig = scores
    grad = (sig - labels) / n
    return LossTerm(float(bce.sum() / n), grad, n, clamped)


@dataclass(frozen=True)
class LossReport:
    l_c: float
    l_f: float
    l_r: float
    total: float
    counts: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"L_c": self.l_c, "L_f": self.l_f, "L_r": self.l_r, "L": self.total, **self.counts}

    def format(self) -> str:
        lines = [f"{key} = {value:.17g}" if isinstance(value, float) else f"{key} = {value}"
                 for key, value in self.as_dict().items()]
        return "\n".join(lines) + "\n"


def total_loss(
    coarse: Optional[LossTerm] = None,
    fine: Optional[LossTerm] = None,
    rep: Optional[LossTerm] = None,
) -> LossReport:
    """L = L_c + L_f + L_r; a missing component contributes 0"""
    parts = {"coarse": coarse, "fine": fine, "repeatability": rep}
    values = {name: (term.value if term is not None else 0.0) for name, term in parts.items()}
    counts = {}
    for name, term in parts.items():
        if term is not None:
            counts[f"{name}_terms"] = term.terms
            counts[f"{name}_clamped"] = term.clamped
    total = values["coarse"] + values["fine"] + values["repeatability"]
    return LossReport(values["coarse"], values["fine"], values["repeatability"], total, counts)

