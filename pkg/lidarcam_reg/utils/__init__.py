# Utils module initialization
from .image_utils import (
    pil2tensor,
    pil2gray, tensor2gray, gray2pil,
    load_gray, save_png,
    colorize, render_overlay,
    create_error_image
)
from .cache import ResultCache

__all__ = [
    'pil2tensor',
    'pil2gray', 'tensor2gray', 'gray2pil',
    'load_gray', 'save_png',
    'colorize', 'render_overlay',
    'create_error_image',
    'ResultCache'
]
