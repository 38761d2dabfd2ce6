"""
Coarse-to-fine refinement
Window cropping, fine-level attention, correlation heatmap and soft-argmax
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np
import torch

from ..errors import DimensionMismatch, InvalidConfig, WindowOutOfRange
from ..features.attention import AttentionWeights, attend_tokens
from ..features.extractor import DTYPE, FeaturePyramid
from .coarse import CoarseMatchSet

logger = logging.getLogger(__name__)

TAU2_FLOOR = 1e-12
COARSE_TO_FINE = 4
FINE_TO_PIXEL = 2


def fine_to_pixel(coords: np.ndarray) -> np.ndarray:
    """Fine-grid coordinates -> full-resolution pixel coordinates (pixel centres)"""
    return FINE_TO_PIXEL * np.asarray(coords, dtype=np.float64) + (FINE_TO_PIXEL - 1) / 2.0


def cell_to_fine(index: np.ndarray, cols: int) -> Tuple[np.ndarray, np.ndarray]:
    """Coarse cell index -> fine-grid (row, col) of the cell centre"""
    r, c = np.divmod(np.asarray(index, dtype=np.int64), cols)
    offset = COARSE_TO_FINE // 2
    return COARSE_TO_FINE * r + offset, COARSE_TO_FINE * c + offset


@dataclass(frozen=True)
class FineMatchSet:
    """
    Refined correspondences in full-resolution pixels

    tau2 is the heatmap variance in fine-grid pixels². cam_fine and
    window_center (centre of the possibly clamped window) are camera
    fine-grid (x, y) coordinates.
    """

    lidar_px: np.ndarray
    cam_px: np.ndarray
    confidence: np.ndarray
    tau2: np.ndarray
    clamped: np.ndarray
    cam_fine: np.ndarray
    window_center: np.ndarray
    window: int

    def __len__(self) -> int:
        return len(self.confidence)

    @classmethod
    def empty(cls, window: int) -> "FineMatchSet":
        z2 = np.zeros((0, 2))
        return cls(z2, z2, np.zeros(0), np.zeros(0), np.zeros(0, dtype=bool), z2, z2, window)

    def subset(self, mask: np.ndarray) -> "FineMatchSet":
        return replace(
            self,
            lidar_px=self.lidar_px[mask], cam_px=self.cam_px[mask],
            confidence=self.confidence[mask], tau2=self.tau2[mask], clamped=self.clamped[mask],
            cam_fine=self.cam_fine[mask], window_center=self.window_center[mask],
        )

    def with_cam_px(self, cam_px: np.ndarray) -> "FineMatchSet":
        return replace(self, cam_px=np.asarray(cam_px, dtype=np.float64))


def spatial_expectation(heatmap: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Expected (x, y) and positional variance of M×w×w heatmaps

    Returns:
        (x, y, tau2) relative to the window's top-left cell; tau2 = trace of
        the covariance, floored at 1e-12
    """
    m, h, w = heatmap.shape
    ys = torch.arange(h, dtype=heatmap.dtype)
    xs = torch.arange(w, dtype=heatmap.dtype)
    px = heatmap.sum(dim=1)  # M×w marginal over x
    py = heatmap.sum(dim=2)  # M×h marginal over y
    ex = px @ xs
    ey = py @ ys
    var_x = px @ (xs * xs) - ex * ex
    var_y = py @ (ys * ys) - ey * ey
    tau2 = torch.clamp(var_x + var_y, min=TAU2_FLOOR)
    return ex, ey, tau2


def soft_argmax(heatmap: Union[np.ndarray, torch.Tensor]) -> Tuple[float, float, float]:
    """Offset (dx, dy) from the window centre and τ² for one w×w heatmap"""
    heat = torch.as_tensor(np.asarray(heatmap), dtype=DTYPE)
    h, w = heat.shape
    if h != w or h % 2 == 0:
        raise InvalidConfig(f"heatmap must be square with odd size, got {h}x{w}")
    heat = heat / heat.sum()
    ex, ey, tau2 = spatial_expectation(heat[None])
    half = (w - 1) / 2.0
    return float(ex[0]) - half, float(ey[0]) - half, float(tau2[0])


def _window_origins(center_r: np.ndarray, center_c: np.ndarray, grid: Tuple[int, int],
                    window: int, side: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows, cols = grid
    if rows < window or cols < window:
        raise WindowOutOfRange(f"{side} fine grid {rows}x{cols} smaller than window {window}")
    outside = (center_r < 0) | (center_r >= rows) | (center_c < 0) | (center_c >= cols)
    if np.any(outside):
        raise WindowOutOfRange(f"{int(outside.sum())} {side} coarse matches map outside the "
                               f"{rows}x{cols} fine grid")
    half = window // 2
    origin_r = np.clip(center_r - half, 0, rows - window)
    origin_c = np.clip(center_c - half, 0, cols - window)
    clamped = (origin_r != center_r - half) | (origin_c != center_c - half)
    return origin_r, origin_c, clamped


def _crop(fine: torch.Tensor, origin_r: np.ndarray, origin_c: np.ndarray, window: int) -> torch.Tensor:
    """M×(w·w)×C windows"""
    offsets = np.arange(window)
    rr = torch.as_tensor(origin_r[:, None, None] + offsets[None, :, None])
    cc = torch.as_tensor(origin_c[:, None, None] + offsets[None, None, :])
    crops = fine[rr, cc]  # M×w×w×C
    return crops.reshape(len(origin_r), window * window, fine.shape[-1])


@torch.no_grad()
def refine(
    coarse: CoarseMatchSet,
    fine_lidar: Union[FeaturePyramid, torch.Tensor],
    fine_cam: Union[FeaturePyramid, torch.Tensor],
    w: int = 5,
    fine_weights: Optional[AttentionWeights] = None,
    temperature: float = 1.0,
) -> FineMatchSet:
    """
    Sub-pixel refinement of coarse matches inside w×w fine windows

    Args:
        coarse: matches with lidar/camera coarse grid shapes
        fine_lidar, fine_cam: fine grids (Hf×Wf×C) or their pyramids
        w: odd window size
        fine_weights: small fine-level transformer (None = no enhancement)
        temperature: softmax temperature τ_f of the correlation heatmap

    Returns:
        FineMatchSet in full-resolution pixels, in coarse-match order
    """
    if w < 3 or w % 2 == 0:
        raise InvalidConfig(f"window must be odd and >= 3, got {w}")
    if temperature <= 0:
        raise InvalidConfig(f"fine temperature must be > 0, got {temperature}")
    f0 = (fine_lidar.fine if isinstance(fine_lidar, FeaturePyramid) else fine_lidar).to(DTYPE)
    f1 = (fine_cam.fine if isinstance(fine_cam, FeaturePyramid) else fine_cam).to(DTYPE)
    if f0.shape[-1] != f1.shape[-1]:
        raise DimensionMismatch(f"fine widths differ: {f0.shape[-1]} vs {f1.shape[-1]}")
    if len(coarse) == 0:
        return FineMatchSet.empty(w)
    if coarse.lidar_grid is None or coarse.cam_grid is None:
        raise InvalidConfig("coarse matches must carry their grid shapes for refinement")

    r0, c0 = cell_to_fine(coarse.lidar_index, coarse.lidar_grid[1])
    r1, c1 = cell_to_fine(coarse.cam_index, coarse.cam_grid[1])
    o0r, o0c, _ = _window_origins(r0, c0, tuple(f0.shape[:2]), w, "lidar")
    o1r, o1c, clamped = _window_origins(r1, c1, tuple(f1.shape[:2]), w, "camera")
    if np.any(clamped):
        logger.debug("⚠️ %d refinement windows clamped to the grid border", int(clamped.sum()))

    win0 = _crop(f0, o0r, o0c, w)
    win1 = _crop(f1, o1r, o1c, w)
    if fine_weights is not None and fine_weights.layers:
        win0, win1 = attend_tokens(win0, win1, fine_weights)

    centre_token = torch.as_tensor((r0 - o0r) * w + (c0 - o0c))
    query = win0[torch.arange(len(centre_token)), centre_token]  # M×C
    logits = torch.einsum("mc,mtc->mt", query, win1) / temperature
    heat = torch.softmax(logits, dim=1).reshape(-1, w, w)
    ex, ey, tau2 = spatial_expectation(heat)

    cam_fine = np.stack([o1c + ex.numpy(), o1r + ey.numpy()], axis=1)
    lidar_fine = np.stack([c0, r0], axis=1).astype(np.float64)
    return FineMatchSet(
        lidar_px=fine_to_pixel(lidar_fine),
        cam_px=fine_to_pixel(cam_fine),
        confidence=np.asarray(coarse.confidence, dtype=np.float64),
        tau2=tau2.numpy().copy(),
        clamped=clamped,
        cam_fine=cam_fine,
        window_center=np.stack([o1c, o1r], axis=1).astype(np.float64) + w // 2,
        window=w,
    )
