"""
Dual-path feature extraction
Coarse (1/8) and fine (1/2) descriptor grids for LiDAR intensity and camera images
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import InvalidConfig, WeightShapeMismatch
from ..geometry.camera import GrayImage, IntensityImage

logger = logging.getLogger(__name__)

BRANCHES = ("lidar", "camera")
ORIENTATION_BINS = 8
# per-pixel channels: intensity, 8 orientation bins, gradient magnitude
PIXEL_CHANNELS = ORIENTATION_BINS + 2
# descriptors pool the channels over a GRID×GRID layout of spatial bins
GRID = 4
HANDCRAFTED_CHANNELS = GRID * GRID * PIXEL_CHANNELS
COARSE_BIN = 8
FINE_BIN = 4
# centred channel groups below this norm carry no structure
FLAT_NORM = 1e-6
DTYPE = torch.float64


@dataclass(frozen=True)
class FeaturePyramid:
    """coarse: (H/8, W/8, C_c); fine: (H/2, W/2, C_f); H, W of the padded input"""

    coarse: torch.Tensor
    fine: torch.Tensor
    source: str
    image_shape: Tuple[int, int]

    @property
    def coarse_shape(self) -> Tuple[int, int]:
        return tuple(self.coarse.shape[:2])

    @property
    def fine_shape(self) -> Tuple[int, int]:
        return tuple(self.fine.shape[:2])

    @property
    def padded_shape(self) -> Tuple[int, int]:
        return self.coarse.shape[0] * 8, self.coarse.shape[1] * 8


def pad_to_multiple(pixels: np.ndarray, multiple: int = 8, mode: str = "replicate") -> torch.Tensor:
    """Pad (bottom/right) to a multiple; returns 1×1×H×W"""
    x = torch.as_tensor(np.ascontiguousarray(pixels), dtype=DTYPE)[None, None]
    h, w = pixels.shape
    pad_h = (-h) % multiple
    pad_w = (-w) % multiple
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode=mode)
    return x


def l2_normalize(desc: torch.Tensor, dim: int = -1, min_norm: float = 0.0) -> torch.Tensor:
    """Unit-length rows; rows with norm ≤ min_norm become zero"""
    norm = desc.norm(dim=dim, keepdim=True)
    keep = norm > min_norm
    return torch.where(keep, desc / torch.where(keep, norm, torch.ones_like(norm)),
                       torch.zeros_like(desc))


def gradient_channels(x: torch.Tensor) -> torch.Tensor:
    """
    Per-pixel hand-crafted channels

    Orientation bins are centred on multiples of 45°; each pixel splits its
    gradient magnitude linearly between the two nearest bins.

    Args:
        x: 1×1×H×W image

    Returns:
        1×10×H×W: intensity, magnitude split into 8 orientation bins, magnitude
    """
    kx = torch.tensor([[[[-0.5, 0.0, 0.5]]]], dtype=DTYPE)
    gx = F.conv2d(F.pad(x, (1, 1, 0, 0), mode="replicate"), kx)
    gy = F.conv2d(F.pad(x, (0, 0, 1, 1), mode="replicate"), kx.transpose(2, 3))
    mag = torch.sqrt(gx * gx + gy * gy)
    position = torch.remainder(torch.atan2(gy, gx), 2 * np.pi) / (2 * np.pi / ORIENTATION_BINS)
    lower = torch.floor(position)
    upper_weight = position - lower
    lo = torch.remainder(lower, ORIENTATION_BINS).long()[:, 0]
    hi = torch.remainder(lo + 1, ORIENTATION_BINS)

    def onehot(bins: torch.Tensor) -> torch.Tensor:
        return F.one_hot(bins, ORIENTATION_BINS).permute(0, 3, 1, 2).to(DTYPE)

    hist = mag * ((1.0 - upper_weight) * onehot(lo) + upper_weight * onehot(hi))
    return torch.cat([x, hist, mag], dim=1)


def _gather_grid(pooled: torch.Tensor, step: int, spacing: int,
                 rows: int, cols: int) -> torch.Tensor:
    """
    Spatial-bin layout of every descriptor

    Descriptor (r, c) reads pooled[step·r + spacing·k, step·c + spacing·l]
    for k, l < GRID.

    Returns:
        rows×cols×GRID²×C
    """
    blocks = [
        pooled[0, :,
               spacing * k: spacing * k + step * (rows - 1) + 1: step,
               spacing * l: spacing * l + step * (cols - 1) + 1: step]
        for k in range(GRID) for l in range(GRID)
    ]
    return torch.stack(blocks, dim=0).permute(2, 3, 0, 1)


def normalize_descriptors(binned: torch.Tensor) -> torch.Tensor:
    """
    Zero-mean, unit-norm descriptors from binned channels

    Each channel is centred over the spatial bins; the intensity, orientation
    and magnitude groups are normalized separately, then jointly. Flat
    patches give the zero descriptor.

    Args:
        binned: ...×GRID²×PIXEL_CHANNELS

    Returns:
        ...×HANDCRAFTED_CHANNELS
    """
    centred = binned - binned.mean(dim=-2, keepdim=True)
    groups = (centred[..., :1], centred[..., 1:1 + ORIENTATION_BINS],
              centred[..., 1 + ORIENTATION_BINS:])
    parts = [l2_normalize(g.flatten(-2), min_norm=FLAT_NORM) for g in groups]
    return l2_normalize(torch.cat(parts, dim=-1))


def window_coverage(valid: torch.Tensor) -> torch.Tensor:
    """
    Fraction of valid pixels under each coarse descriptor's window

    Args:
        valid: 1×1×H×W mask (H, W multiples of 8), pixels outside count as invalid

    Returns:
        (H/8)×(W/8)
    """
    _, _, h, w = valid.shape
    margin = (GRID - 1) * COARSE_BIN // 2
    bins = F.avg_pool2d(F.pad(valid, (margin,) * 4), kernel_size=COARSE_BIN, stride=COARSE_BIN)
    return _gather_grid(bins, 1, 1, h // 8, w // 8).mean(dim=(2, 3))


def handcrafted_pyramid(x: torch.Tensor,
                        valid: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Hand-crafted coarse and fine descriptors of a padded image

    A coarse cell pools 8×8-pixel bins over the 32×32 window centred on it.
    A fine pixel pools 4×4-pixel bins over the 16×16 window centred on it.
    With a validity mask, coarse cells whose window is not fully covered
    get the zero descriptor.

    Args:
        x: 1×1×H×W image, H and W multiples of 8
        valid: optional 1×1×H×W mask of observed pixels

    Returns:
        (coarse H/8×W/8×C, fine H/2×W/2×C)
    """
    ch = gradient_channels(x)
    _, _, h, w = ch.shape
    hc, wc = h // 8, w // 8

    margin = (GRID - 1) * COARSE_BIN // 2
    bins = F.avg_pool2d(F.pad(ch, (margin,) * 4, mode="replicate"),
                        kernel_size=COARSE_BIN, stride=COARSE_BIN)
    coarse = normalize_descriptors(_gather_grid(bins, 1, 1, hc, wc))
    if valid is not None:
        covered = window_coverage(valid) >= 1.0 - 1e-9
        coarse = coarse * covered[..., None].to(DTYPE)

    # window [2y - 7, 2y + 8] is centred on the fine pixel's centre 2y + 0.5
    lead = GRID * FINE_BIN // 2 - 1
    pooled = F.avg_pool2d(F.pad(ch, (lead, lead + 1, lead, lead + 1), mode="replicate"),
                          kernel_size=FINE_BIN, stride=1)
    fine = normalize_descriptors(_gather_grid(pooled, 2, FINE_BIN, h // 2, w // 2))
    return coarse, fine


# (name, stride, kernel) in forward order
BACKBONE_LAYERS = (("stem", 2, 3), ("fine_head", 1, 1), ("down1", 2, 3),
                   ("down2", 2, 3), ("coarse_head", 1, 1))


class ConvBackbone(torch.nn.Module):
    """
    Small strided convolution stack for one branch

    stem (1/2) -> fine_head; stem -> down1 (1/4) -> down2 (1/8) -> coarse_head
    """

    def __init__(self, tensors: Dict[str, torch.Tensor], branch: str):
        super().__init__()
        if branch not in BRANCHES:
            raise InvalidConfig(f"branch must be one of {BRANCHES}, got {branch!r}")
        self.branch = branch
        for name, _, kernel in BACKBONE_LAYERS:
            key = f"backbone.{branch}.{name}"
            weight = tensors.get(f"{key}.weight")
            bias = tensors.get(f"{key}.bias")
            if weight is None or bias is None:
                raise WeightShapeMismatch(f"missing tensor {key}.weight/.bias")
            if weight.dim() != 4 or tuple(weight.shape[2:]) != (kernel, kernel):
                raise WeightShapeMismatch(f"{key}.weight: expected (out, in, {kernel}, {kernel}), "
                                          f"got {tuple(weight.shape)}")
            if tuple(bias.shape) != (weight.shape[0],):
                raise WeightShapeMismatch(f"{key}.bias: expected ({weight.shape[0]},), "
                                          f"got {tuple(bias.shape)}")
            self.register_buffer(f"{name}_weight", weight.to(DTYPE))
            self.register_buffer(f"{name}_bias", bias.to(DTYPE))

        chain = [("stem", 1), ("fine_head", self.stem_weight.shape[0]),
                 ("down1", self.stem_weight.shape[0]), ("down2", self.down1_weight.shape[0]),
                 ("coarse_head", self.down2_weight.shape[0])]
        for name, expected_in in chain:
            got = getattr(self, f"{name}_weight").shape[1]
            if got != expected_in:
                raise WeightShapeMismatch(
                    f"backbone.{branch}.{name}: expects {expected_in} input channels, has {got}"
                )

    def _conv(self, x: torch.Tensor, name: str, stride: int) -> torch.Tensor:
        weight = getattr(self, f"{name}_weight")
        return F.conv2d(x, weight, getattr(self, f"{name}_bias"), stride=stride,
                        padding=weight.shape[-1] // 2)

    @torch.no_grad()
    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        half = F.relu(self._conv(x, "stem", 2))
        fine = self._conv(half, "fine_head", 1)
        quarter = F.relu(self._conv(half, "down1", 2))
        eighth = F.relu(self._conv(quarter, "down2", 2))
        coarse = self._conv(eighth, "coarse_head", 1)
        return coarse[0].permute(1, 2, 0), fine[0].permute(1, 2, 0)


def extract_pyramid(
    img: Union[GrayImage, IntensityImage],
    branch: str,
    backbone: Optional[ConvBackbone] = None,
) -> FeaturePyramid:
    """
    Coarse and fine descriptor grids for one image

    Args:
        img: camera GrayImage or LiDAR IntensityImage
        branch: 'lidar' or 'camera' (selects the branch's own weights)
        backbone: learned extractor for this branch; hand-crafted mode if None

    Returns:
        FeaturePyramid over the input padded to multiples of 8; in hand-crafted
        mode, coarse cells of an IntensityImage whose window leaves the
        observed pixels are zero
    """
    if branch not in BRANCHES:
        raise InvalidConfig(f"branch must be one of {BRANCHES}, got {branch!r}")
    if img.pixels.size == 0:
        raise InvalidConfig("cannot extract features from an empty image")
    if backbone is not None and backbone.branch != branch:
        raise WeightShapeMismatch(f"{backbone.branch} weights passed to the {branch} branch")

    x = pad_to_multiple(img.pixels)
    if backbone is None:
        valid = None
        if isinstance(img, IntensityImage):
            valid = pad_to_multiple(np.asarray(img.valid, dtype=np.float64), mode="constant")
        coarse, fine = handcrafted_pyramid(x, valid)
    else:
        coarse, fine = backbone(x)
    if not (torch.isfinite(coarse).all() and torch.isfinite(fine).all()):
        raise InvalidConfig(f"{branch} features contain non-finite values")
    return FeaturePyramid(coarse.contiguous(), fine.contiguous(), branch, tuple(img.pixels.shape))


def cell_validity(valid: np.ndarray) -> torch.Tensor:
    """Fraction of valid pixels per coarse cell, flattened row-major (padding counts as invalid)"""
    mask = pad_to_multiple(np.asarray(valid, dtype=np.float64), mode="constant")
    return F.avg_pool2d(mask, kernel_size=8, stride=8).reshape(-1)
