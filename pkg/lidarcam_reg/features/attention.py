"""
Forward-only self/cross attention enhancement
Single-head scaled dot-product attention, residual message, residual feed-forward
"""

import logging
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import torch

from ..errors import WeightShapeMismatch
from .encoding import FlatFeatures
from .extractor import DTYPE

logger = logging.getLogger(__name__)

LAYER_KINDS = ("self", "cross")
DEFAULT_LAYOUT = ("self", "cross", "self", "cross")


def param_shapes(channels: int) -> Dict[str, Tuple[int, ...]]:
    c, hidden = channels, 2 * channels
    return {"q": (c, c), "k": (c, c), "v": (c, c), "o": (c, c),
            "ff1": (c, hidden), "ff1_bias": (hidden,), "ff2": (hidden, c), "ff2_bias": (c,)}


@dataclass(frozen=True)
class AttentionLayer:
    kind: str
    params: Dict[str, torch.Tensor]

    @property
    def channels(self) -> int:
        return self.params["q"].shape[0]

    def message(self, x: torch.Tensor, source: torch.Tensor) -> torch.Tensor:
        """Attention of queries from x over keys/values from source (batched over leading dims)"""
        if source.shape[-2] == 0:
            return torch.zeros_like(x)
        p = self.params
        q, k, v = x @ p["q"], source @ p["k"], source @ p["v"]
        weights = torch.softmax(q @ k.transpose(-2, -1) / self.channels ** 0.5, dim=-1)
        return (weights @ v) @ p["o"]

    def feed_forward(self, x: torch.Tensor) -> torch.Tensor:
        p = self.params
        return torch.relu(x @ p["ff1"] + p["ff1_bias"]) @ p["ff2"] + p["ff2_bias"]

    def __call__(self, x0: torch.Tensor, x1: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        if self.kind == "self":
            y0 = x0 + self.message(x0, x0)
            y1 = x1 + self.message(x1, x1)
        else:
            # both directions read the pre-layer tokens
            y0 = x0 + self.message(x0, x1)
            y1 = x1 + self.message(x1, x0)
        return y0 + self.feed_forward(y0), y1 + self.feed_forward(y1)


@dataclass(frozen=True)
class AttentionWeights:
    layers: List[AttentionLayer]

    @property
    def channels(self) -> int:
        return self.layers[0].channels if self.layers else 0

    @property
    def kinds(self) -> Tuple[str, ...]:
        return tuple(layer.kind for layer in self.layers)

    @classmethod
    def from_tensors(cls, tensors: Dict[str, torch.Tensor], prefix: str,
                     channels: Optional[int] = None) -> "AttentionWeights":
        """
        Collect `{prefix}.layer{i}.{self|cross}.{param}` tensors

        Raises:
            WeightShapeMismatch on missing parameters, gaps in layer numbering
            or shapes inconsistent with the channel count
        """
        kinds = "|".join(LAYER_KINDS)
        pattern = re.compile(rf"^{re.escape(prefix)}\.layer(\d+)\.({kinds})\.(\w+)$")
        found: Dict[int, Tuple[str, Dict[str, torch.Tensor]]] = {}
        for name, tensor in tensors.items():
            m = pattern.match(name)
            if not m:
                continue
            index, kind, param = int(m.group(1)), m.group(2), m.group(3)
            entry = found.setdefault(index, (kind, {}))
            if entry[0] != kind:
                raise WeightShapeMismatch(f"{prefix}.layer{index} tagged both self and cross")
            entry[1][param] = tensor.to(DTYPE)
        if sorted(found) != list(range(len(found))):
            raise WeightShapeMismatch(f"{prefix}: non-contiguous layer indices {sorted(found)}")

        layers = []
        for index in range(len(found)):
            kind, params = found[index]
            width = channels if channels is not None else params.get("q", torch.empty(0, 0)).shape[0]
            for param, shape in param_shapes(width).items():
                if param not in params:
                    raise WeightShapeMismatch(f"{prefix}.layer{index}.{kind}: missing {param}")
                if tuple(params[param].shape) != shape:
                    raise WeightShapeMismatch(
                        f"{prefix}.layer{index}.{kind}.{param}: expected {shape}, "
                        f"got {tuple(params[param].shape)}"
                    )
            layers.append(AttentionLayer(kind, params))
        return cls(layers)

    @classmethod
    def zeros(cls, channels: int, kinds: Sequence[str] = DEFAULT_LAYOUT) -> "AttentionWeights":
        return cls([
            AttentionLayer(kind, {p: torch.zeros(s, dtype=DTYPE)
                                  for p, s in param_shapes(channels).items()})
            for kind in kinds
        ])

    def to_tensors(self, prefix: str) -> Dict[str, torch.Tensor]:
        return {f"{prefix}.layer{i}.{layer.kind}.{p}": t
                for i, layer in enumerate(self.layers) for p, t in layer.params.items()}


def attend_tokens(x0: torch.Tensor, x1: torch.Tensor,
                  w: AttentionWeights) -> Tuple[torch.Tensor, torch.Tensor]:
    """Run all layers on raw N×C token matrices"""
    for layer in w.layers:
        x0, x1 = layer(x0, x1)
    return x0, x1


@torch.no_grad()
def attend(flat_lidar: FlatFeatures, flat_cam: FlatFeatures,
           w: AttentionWeights) -> Tuple[FlatFeatures, FlatFeatures]:
    """Interleaved self/cross enhancement of both token sets"""
    if flat_lidar.channels != flat_cam.channels:
        raise WeightShapeMismatch(
            f"token widths differ: lidar {flat_lidar.channels}, camera {flat_cam.channels}"
        )
    if w.layers and w.channels != flat_lidar.channels:
        raise WeightShapeMismatch(
            f"attention expects {w.channels} channels, tokens have {flat_lidar.channels}"
        )
    x0, x1 = attend_tokens(flat_lidar.tokens.to(DTYPE), flat_cam.tokens.to(DTYPE), w)
    return FlatFeatures(x0, flat_lidar.grid_shape), FlatFeatures(x1, flat_cam.grid_shape)
