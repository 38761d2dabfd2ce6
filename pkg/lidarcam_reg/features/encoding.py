"""
Flattened coarse tokens and 2D sinusoidal positional encoding
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import torch

from ..errors import InvalidConfig
from .extractor import DTYPE, FeaturePyramid

ENCODING_BASE = 10000.0


@dataclass(frozen=True)
class FlatFeatures:
    """tokens: N×C; row i is coarse cell (i // cols, i % cols)"""

    tokens: torch.Tensor
    grid_shape: Tuple[int, int]

    def __post_init__(self):
        rows, cols = self.grid_shape
        if self.tokens.dim() != 2 or self.tokens.shape[0] != rows * cols:
            raise InvalidConfig(
                f"{tuple(self.tokens.shape)} tokens do not fit a {rows}x{cols} grid"
            )

    @property
    def channels(self) -> int:
        return self.tokens.shape[1]

    def cell(self, index: int) -> Tuple[int, int]:
        return divmod(int(index), self.grid_shape[1])


def flatten(pyramid: FeaturePyramid) -> FlatFeatures:
    rows, cols, channels = pyramid.coarse.shape
    return FlatFeatures(pyramid.coarse.reshape(rows * cols, channels), (rows, cols))


def _axis_encoding(positions: torch.Tensor, width: int) -> torch.Tensor:
    """sin/cos pairs over geometrically spaced frequencies; width channels"""
    j = torch.arange(width)
    freq = ENCODING_BASE ** (-2.0 * (j // 2).to(DTYPE) / width)
    phase = positions.to(DTYPE)[:, None] * freq[None, :]
    return torch.where(j % 2 == 0, torch.sin(phase), torch.cos(phase))


@lru_cache(maxsize=16)
def _encoding_table_cached(rows: int, cols: int, channels: int) -> torch.Tensor:
    half = channels // 2
    r, c = torch.meshgrid(torch.arange(rows), torch.arange(cols), indexing="ij")
    return torch.cat(
        [_axis_encoding(r.reshape(-1), half), _axis_encoding(c.reshape(-1), half)], dim=1
    )


def encoding_table(rows: int, cols: int, channels: int) -> torch.Tensor:
    """
    Fixed encodings for a rows×cols grid, shape (rows·cols, channels)

    The first half of the channels encode the row index, the second half
    the column index. Entries depend only on (row, col), never on the grid size.
    """
    if channels % 2:
        raise InvalidConfig(f"positional encoding needs an even channel count, got {channels}")
    return _encoding_table_cached(rows, cols, channels).clone()


def positional_encode(flat: FlatFeatures) -> FlatFeatures:
    """Add (not replace) the 2D sinusoidal encoding to every token"""
    table = encoding_table(*flat.grid_shape, flat.channels)
    return FlatFeatures(flat.tokens + table.to(flat.tokens.dtype), flat.grid_shape)
