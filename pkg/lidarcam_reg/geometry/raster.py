"""
Raster operations: nearest-valid filling and long-side resizing
"""

import logging
from functools import lru_cache
from typing import Tuple

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import InvalidConfig
from .camera import DepthMap, GrayImage, IntensityImage

logger = logging.getLogger(__name__)

DEFAULT_FILL_RADIUS = 8


@lru_cache(maxsize=32)
def _fill_offsets(max_radius: float) -> Tuple[Tuple[int, int], ...]:
    """Offsets within the radius ordered by (distance², row, col)"""
    r = int(np.floor(max_radius))
    offsets = sorted(
        (dy * dy + dx * dx, dy, dx)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if 0 < dy * dy + dx * dx <= max_radius * max_radius
    )
    return tuple((dy, dx) for _, dy, dx in offsets)


def fill_nearest(
    values: np.ndarray, valid: np.ndarray, max_radius: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Copy each invalid pixel's value from its nearest valid pixel

    Candidates at equal Euclidean distance are taken in row-major order.
    Valid pixels are never altered.

    Returns:
        (filled values, mask of newly filled pixels)
    """
    if max_radius < 0:
        raise InvalidConfig(f"max_radius must be >= 0, got {max_radius}")
    values = np.asarray(values)
    valid = np.asarray(valid, dtype=bool)
    out = values.copy()
    filled = np.zeros_like(valid)
    todo = ~valid
    if not np.any(valid) or not np.any(todo):
        return out, filled

    h, w = valid.shape
    r = int(np.floor(max_radius))
    padded_valid = np.pad(valid, r, constant_values=False)
    padded_values = np.pad(values, r)
    for dy, dx in _fill_offsets(float(max_radius)):
        window = (slice(r + dy, r + dy + h), slice(r + dx, r + dx + w))
        hit = todo & padded_valid[window]
        if np.any(hit):
            out[hit] = padded_values[window][hit]
            filled |= hit
            todo &= ~hit
            if not np.any(todo):
                break
    return out, filled


def fill_depth_nearest(d: DepthMap, max_radius: float = DEFAULT_FILL_RADIUS) -> DepthMap:
    """Nearest-neighbour depth completion within max_radius pixels"""
    depths, filled = fill_nearest(d.depths, d.valid, max_radius)
    logger.debug("Filled %d missing depth pixels (radius %s)", int(filled.sum()), max_radius)
    return DepthMap(depths, d.valid | filled, d.filled | filled)


def densify_intensity(img: IntensityImage, max_radius: float = DEFAULT_FILL_RADIUS) -> IntensityImage:
    """Same nearest filling applied to a sparse intensity image"""
    pixels, filled = fill_nearest(img.pixels, img.valid, max_radius)
    return IntensityImage(pixels, img.valid | filled)


def resize_long_side(img: GrayImage, target: int) -> Tuple[GrayImage, float]:
    """
    Bilinear resize so that max(H, W) == target, keeping aspect ratio

    The short side is rounded half-up to an integer (at least 1 pixel).

    Returns:
        (resized image, applied scale)
    """
    if target <= 0:
        raise InvalidConfig(f"resize target must be positive, got {target}")
    h, w = img.pixels.shape
    long_side = max(h, w)
    if long_side == target:
        return GrayImage(img.pixels.copy()), 1.0
    scale = target / long_side
    if w >= h:
        new_w, new_h = target, max(1, int(np.floor(h * scale + 0.5)))
    else:
        new_h, new_w = target, max(1, int(np.floor(w * scale + 0.5)))

    tensor = torch.from_numpy(np.ascontiguousarray(img.pixels, dtype=np.float64))[None, None]
    resized = F.interpolate(tensor, size=(new_h, new_w), mode="bilinear", align_corners=False)
    pixels = resized[0, 0].numpy().clip(0.0, 1.0)
    return GrayImage(pixels), scale
