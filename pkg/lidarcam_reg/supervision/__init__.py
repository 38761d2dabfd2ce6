# supervision: ground-truth generation and gradient-checked losses
from .ground_truth import (
    GtMatchSet, GtRepeatabilityMap, gt_coarse_matches, gt_repeatability, gt_fine_targets, coarse_grid,
)
from .losses import (
    LossTerm, LossReport, loss_coarse, loss_fine, loss_repeatability, total_loss,
)

__all__ = [
    'GtMatchSet', 'GtRepeatabilityMap', 'gt_coarse_matches', 'gt_repeatability', 'gt_fine_targets',
    'coarse_grid',
    'LossTerm', 'LossReport', 'loss_coarse', 'loss_fine', 'loss_repeatability', 'total_loss',
]
