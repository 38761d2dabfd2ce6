# pose: lifting, EPnP and RANSAC
from .lift import Correspondences, lift_matches
from .epnp import epnp, epnp_arrays, procrustes, reprojection_errors, choose_control_points
from .ransac import PoseEstimate, ransac_pnp, required_iterations

__all__ = [
    'Correspondences', 'lift_matches',
    'epnp', 'epnp_arrays', 'procrustes', 'reprojection_errors', 'choose_control_points',
    'PoseEstimate', 'ransac_pnp', 'required_iterations',
]
