# pipeline: end-to-end calibration and batch execution
from .calibrate import (
    CalibrationResult, MatchingResult, SceneFiles, calibrate, camera_depth_for,
    load_scene_dir, match_views, prepare_camera, render_pose_overlay, solve_pose, write_scene_dir,
)
from .supervise import SupervisionResult, gt_match_records, supervise_scene, write_supervision
from .tasks import BatchTaskManager, ProgressTracker

__all__ = [
    'CalibrationResult', 'MatchingResult', 'SceneFiles', 'calibrate', 'camera_depth_for',
    'load_scene_dir', 'match_views', 'prepare_camera', 'render_pose_overlay', 'solve_pose',
    'write_scene_dir',
    'SupervisionResult', 'gt_match_records', 'supervise_scene', 'write_supervision',
    'BatchTaskManager', 'ProgressTracker',
]
