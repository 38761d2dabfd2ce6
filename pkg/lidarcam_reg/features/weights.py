"""
XMRW weight files and model parameter bundles

Layout (little-endian):
    b"XMRW", version u32, tensor count u32
    per tensor: name length u16, name (utf-8), rank u8, dims u32×rank, float32 payload
    CRC32 of everything before the trailer, u32
"""

import logging
import struct
import zlib
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import torch

from ..errors import WeightFileError, WeightShapeMismatch
from ..geometry.formats import PathLike, write_bytes_atomic
from ..matching.coarse import RepeatabilityMLP
from ..scene.prng import SplitMix64
from .attention import DEFAULT_LAYOUT, AttentionWeights, param_shapes
from .extractor import BACKBONE_LAYERS, BRANCHES, DTYPE, ConvBackbone

logger = logging.getLogger(__name__)

MAGIC = b"XMRW"
VERSION = 1
FINE_LAYOUT = ("self", "cross")


def encode_weights(tensors: Dict[str, torch.Tensor]) -> bytes:
    """Serialize tensors in name order"""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        data = np.ascontiguousarray(tensors[name].detach().cpu().numpy(), dtype="<f4")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<B", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    body = b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_weights(blob: bytes, source: str = "<weights>") -> Dict[str, torch.Tensor]:
    """
    Parse an XMRW blob

    Raises:
        WeightFileError on bad magic, unsupported version, truncation or CRC mismatch
    """
    if len(blob) < len(MAGIC) + 12 or blob[:4] != MAGIC:
        raise WeightFileError(f"{source}: not an XMRW weight file")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise WeightFileError(f"{source}: CRC32 mismatch")
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise WeightFileError(f"{source}: unsupported version {version}")

    tensors: Dict[str, torch.Tensor] = {}
    offset = 12
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, offset)
            offset += 2
            name = body[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", body, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", body, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(body, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            tensors[name] = torch.as_tensor(data.astype(np.float64).reshape(dims))
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise WeightFileError(f"{source}: truncated or corrupt tensor table ({e})") from e
    if offset != len(body):
        raise WeightFileError(f"{source}: {len(body) - offset} trailing bytes before checksum")
    return tensors


def write_weights(path: PathLike, tensors: Dict[str, torch.Tensor]) -> None:
    write_bytes_atomic(path, encode_weights(tensors))
    logger.info("✓ wrote %d tensors to %s", len(tensors), path)


def read_weights(path: PathLike) -> Dict[str, torch.Tensor]:
    with open(path, "rb") as f:
        return decode_weights(f.read(), str(path))


@dataclass(frozen=True)
class ModelWeights:
    """All learned parameters: two backbones, two transformers, repeatability MLP"""

    backbones: Dict[str, ConvBackbone]
    coarse_attention: AttentionWeights
    fine_attention: AttentionWeights
    repeatability: RepeatabilityMLP

    def backbone(self, branch: str) -> ConvBackbone:
        return self.backbones[branch]

    @property
    def coarse_channels(self) -> int:
        return self.repeatability.channels

    @classmethod
    def from_tensors(cls, tensors: Dict[str, torch.Tensor]) -> "ModelWeights":
        backbones = {branch: ConvBackbone(tensors, branch) for branch in BRANCHES}
        c_c = backbones["lidar"].coarse_head_weight.shape[0]
        c_f = backbones["lidar"].fine_head_weight.shape[0]
        for branch, net in backbones.items():
            got = (net.coarse_head_weight.shape[0], net.fine_head_weight.shape[0])
            if got != (c_c, c_f):
                raise WeightShapeMismatch(f"{branch} backbone outputs {got}, lidar has {(c_c, c_f)}")
        if c_c % 2:
            raise WeightShapeMismatch(f"coarse width must be even for positional encoding, got {c_c}")
        return cls(
            backbones=backbones,
            coarse_attention=AttentionWeights.from_tensors(tensors, "coarse_attention", c_c),
            fine_attention=AttentionWeights.from_tensors(tensors, "fine_attention", c_f),
            repeatability=RepeatabilityMLP.from_tensors(tensors),
        )

    def to_tensors(self) -> Dict[str, torch.Tensor]:
        tensors: Dict[str, torch.Tensor] = {}
        for branch, net in self.backbones.items():
            for name, _, _ in BACKBONE_LAYERS:
                tensors[f"backbone.{branch}.{name}.weight"] = getattr(net, f"{name}_weight")
                tensors[f"backbone.{branch}.{name}.bias"] = getattr(net, f"{name}_bias")
        tensors.update(self.coarse_attention.to_tensors("coarse_attention"))
        tensors.update(self.fine_attention.to_tensors("fine_attention"))
        tensors.update(self.repeatability.to_tensors())
        return tensors


def load_model_weights(path: PathLike) -> ModelWeights:
    model = ModelWeights.from_tensors(read_weights(path))
    logger.info("✓ loaded weights from %s (C_c=%d, %d coarse / %d fine attention layers)",
                path, model.coarse_channels, len(model.coarse_attention.layers),
                len(model.fine_attention.layers))
    return model


def _draw(rng: SplitMix64, shape: Tuple[int, ...], scale: float) -> torch.Tensor:
    n = int(np.prod(shape)) if shape else 1
    return torch.as_tensor(rng.normal(n).reshape(shape) * scale, dtype=DTYPE)


def _attention_tensors(rng: SplitMix64, prefix: str, channels: int,
                       kinds: Sequence[str]) -> Dict[str, torch.Tensor]:
    tensors = {}
    for index, kind in enumerate(kinds):
        for param, shape in param_shapes(channels).items():
            scale = 0.0 if param.endswith("bias") else 0.1 / np.sqrt(shape[0])
            tensors[f"{prefix}.layer{index}.{kind}.{param}"] = _draw(rng, shape, scale)
    return tensors


def init_model_weights(seed: int, coarse_channels: int = 64, fine_channels: int = 32,
                       widths: Tuple[int, int, int] = (16, 32, 64),
                       coarse_layout: Sequence[str] = DEFAULT_LAYOUT,
                       fine_layout: Optional[Sequence[str]] = FINE_LAYOUT) -> Dict[str, torch.Tensor]:
    """
    Seeded random parameters for the full model (He-scaled convolutions,
    small attention projections, zero biases)
    """
    rng = SplitMix64(seed)
    w0, w1, w2 = widths
    conv_shapes = {"stem": (w0, 1, 3, 3), "fine_head": (fine_channels, w0, 1, 1),
                   "down1": (w1, w0, 3, 3), "down2": (w2, w1, 3, 3),
                   "coarse_head": (coarse_channels, w2, 1, 1)}
    tensors: Dict[str, torch.Tensor] = {}
    for branch in BRANCHES:
        branch_rng = rng.fork(f"backbone.{branch}")
        for name, _, _ in BACKBONE_LAYERS:
            shape = conv_shapes[name]
            fan_in = shape[1] * shape[2] * shape[3]
            tensors[f"backbone.{branch}.{name}.weight"] = _draw(branch_rng, shape, np.sqrt(2.0 / fan_in))
            tensors[f"backbone.{branch}.{name}.bias"] = torch.zeros(shape[0], dtype=DTYPE)
    tensors.update(_attention_tensors(rng.fork("coarse_attention"), "coarse_attention",
                                      coarse_channels, coarse_layout))
    tensors.update(_attention_tensors(rng.fork("fine_attention"), "fine_attention",
                                      fine_channels, fine_layout or ()))
    mlp_rng = rng.fork("repeatability")
    hidden = coarse_channels // 2
    tensors["repeatability.w1"] = _draw(mlp_rng, (coarse_channels, hidden), np.sqrt(2.0 / coarse_channels))
    tensors["repeatability.b1"] = torch.zeros(hidden, dtype=DTYPE)
    tensors["repeatability.w2"] = _draw(mlp_rng, (hidden, 1), np.sqrt(1.0 / hidden))
    tensors["repeatability.b2"] = torch.zeros(1, dtype=DTYPE)
    return tensors
