"""
Image utilities for lidarcam_reg
Conversions between PIL, workflow tensors, gray rasters and overlay previews
"""

import torch
import numpy as np
from PIL import Image, ImageDraw
from matplotlib import colormaps
from pathlib import Path
from typing import Optional, Union

from ..geometry.camera import GrayImage
from ..geometry.formats import atomic_path


def pil2tensor(image: Image.Image) -> torch.Tensor:
    """
    Convert PIL Image to workflow tensor format

    Args:
        image: PIL Image

    Returns:
        torch.Tensor in [1, H, W, C] format with values in [0, 1]
    """
    if image.mode != 'RGB':
        image = image.convert('RGB')

    np_image = np.array(image).astype(np.float32) / 255.0

    # [H, W, C] -> [1, H, W, C]
    return torch.from_numpy(np_image)[None,]


def pil2gray(image: Image.Image) -> GrayImage:
    """
    Convert any PIL Image to a GrayImage in [0, 1]

    16-bit grayscale keeps its full precision; everything else goes
    through PIL's luminance conversion.
    """
    if image.mode in ('I;16', 'I;16B', 'I;16L', 'I'):
        pixels = np.asarray(image, dtype=np.float64) / 65535.0
    else:
        pixels = np.asarray(image.convert('L'), dtype=np.float64) / 255.0
    return GrayImage(np.clip(pixels, 0.0, 1.0))


def tensor2gray(tensor: torch.Tensor) -> GrayImage:
    """Workflow IMAGE tensor -> GrayImage (ITU-R 601 luma)"""
    if len(tensor.shape) == 4:
        tensor = tensor[0]
    rgb = tensor.cpu().double().numpy()
    if rgb.ndim == 2:
        return GrayImage(np.clip(rgb, 0.0, 1.0))
    luma = rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
    return GrayImage(np.clip(luma, 0.0, 1.0))


def gray2pil(gray: Union[GrayImage, np.ndarray], bits: int = 8) -> Image.Image:
    """
    Convert a [0, 1] raster to PIL

    Args:
        gray: GrayImage or H×W array
        bits: 8 (mode L) or 16 (mode I;16, lossless enough for interchange)
    """
    pixels = gray.pixels if isinstance(gray, GrayImage) else np.asarray(gray)
    pixels = np.clip(pixels, 0.0, 1.0)
    if bits == 16:
        return Image.fromarray(np.round(pixels * 65535).astype(np.uint16))
    return Image.fromarray(np.round(pixels * 255).astype(np.uint8))


def load_gray(path: Union[str, Path]) -> GrayImage:
    """Load a camera image from disk as GrayImage"""
    with Image.open(path) as image:
        image.load()
        return pil2gray(image)


def save_png(path: Union[str, Path], image: Image.Image) -> None:
    """Atomic PNG write"""
    with atomic_path(path) as tmp:
        image.save(tmp, format='PNG')


def colorize(values: np.ndarray, vmin: float, vmax: float, cmap: str = 'turbo') -> np.ndarray:
    """
    Map scalars to RGB uint8 with a matplotlib colormap

    Args:
        values: array of scalars
        vmin, vmax: range mapped to the ends of the colormap

    Returns:
        (..., 3) uint8 array
    """
    span = max(vmax - vmin, 1e-12)
    normed = np.clip((np.asarray(values, dtype=np.float64) - vmin) / span, 0.0, 1.0)
    rgba = colormaps[cmap](normed)
    return (rgba[..., :3] * 255).round().astype(np.uint8)


def render_overlay(
    gray: GrayImage,
    uv: np.ndarray,
    depth: np.ndarray,
    max_depth: Optional[float] = None,
    radius: int = 1,
) -> Image.Image:
    """
    Projected points tinted by depth over the camera image

    Args:
        gray: camera image
        uv: N×2 pixel coordinates of projected points
        depth: N depths (meters), near points drawn last
        max_depth: far end of the colour ramp (default: max depth)
        radius: dot radius in pixels

    Returns:
        RGB PIL Image
    """
    base = gray2pil(gray).convert('RGB')
    if len(uv) == 0:
        return base
    depth = np.asarray(depth, dtype=np.float64)
    far = float(depth.max()) if max_depth is None else float(max_depth)
    colors = colorize(depth, 0.0, far)
    draw = ImageDraw.Draw(base)
    for k in np.argsort(-depth, kind='stable'):
        u, v = float(uv[k, 0]), float(uv[k, 1])
        color = tuple(int(c) for c in colors[k])
        if radius <= 0:
            draw.point((u, v), fill=color)
        else:
            draw.ellipse((u - radius, v - radius, u + radius, v + radius), fill=color)
    return base


def create_error_image(width: int = 512, height: int = 512,
                       message: str = "Error") -> Image.Image:
    """Create error placeholder image"""
    image = Image.new('RGB', (width, height), color='#FF0000')
    draw = ImageDraw.Draw(image)
    draw.text((10, 10), message, fill='white')
    return image
