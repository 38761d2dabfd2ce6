"""
File formats: KITTI-style binary clouds, PFM/PGM maps, pose and intrinsics text
All writers are atomic (temp file + rename)
"""

import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np
from PIL import Image

from ..errors import FormatError
from .camera import CameraIntrinsics, PointCloud4D
from .transforms import RigidTransform

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@contextmanager
def atomic_path(path: PathLike) -> Iterator[Path]:
    """
    Yield a temporary sibling path that replaces `path` on success

    The parent directory is created if missing.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    os.close(fd)
    tmp_path = Path(tmp)
    try:
        yield tmp_path
        os.replace(tmp_path, target)
    finally:
        if tmp_path.exists():
            tmp_path.unlink()


def write_bytes_atomic(path: PathLike, data: bytes) -> None:
    with atomic_path(path) as tmp:
        tmp.write_bytes(data)


def write_text_atomic(path: PathLike, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


# Point clouds

def read_velodyne_bin(path: PathLike, normalize: bool = True) -> PointCloud4D:
    """Little-endian float32 (x, y, z, intensity) quadruplets"""
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % 4:
        raise FormatError(f"{path}: size is not a multiple of 16 bytes")
    return PointCloud4D.from_raw(raw.reshape(-1, 4).astype(np.float64), normalize=normalize)


def write_velodyne_bin(path: PathLike, cloud: PointCloud4D) -> None:
    write_bytes_atomic(path, cloud.points.astype("<f4").tobytes())


# Float maps

def write_pfm(path: PathLike, data: np.ndarray) -> None:
    """Single-channel little-endian PFM (rows stored bottom to top)"""
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise FormatError(f"PFM writer expects a 2D map, got {arr.shape}")
    h, w = arr.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    payload = np.flipud(arr).astype("<f4").tobytes()
    write_bytes_atomic(path, header + payload)


def read_pfm(path: PathLike) -> np.ndarray:
    """Read a single-channel PFM as float32 H×W (top row first)"""
    with open(path, "rb") as f:
        tokens = []
        while len(tokens) < 4:
            line = f.readline()
            if not line:
                raise FormatError(f"{path}: truncated PFM header")
            tokens.extend(line.decode("ascii").split())
        kind, w, h, scale = tokens[0], int(tokens[1]), int(tokens[2]), float(tokens[3])
        if kind != "Pf":
            raise FormatError(f"{path}: only grayscale PFM ('Pf') is supported, got {kind!r}")
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype)
    if data.size != w * h:
        raise FormatError(f"{path}: expected {w * h} floats, found {data.size}")
    return np.flipud(data.reshape(h, w)).astype(np.float32)


def write_pgm(path: PathLike, data: np.ndarray, vmax: Optional[float] = None) -> None:
    """8-bit preview; values scaled by vmax (default: map maximum)"""
    arr = np.asarray(data, dtype=np.float64)
    top = float(arr.max()) if vmax is None else float(vmax)
    scaled = np.zeros_like(arr) if top <= 0 else np.clip(arr / top, 0.0, 1.0)
    image = Image.fromarray(np.round(scaled * 255).astype(np.uint8))
    with atomic_path(path) as tmp:
        image.save(tmp, format="PPM")


# Poses and intrinsics

def format_pose(pose: RigidTransform) -> str:
    rows = pose.as_matrix()[:3]
    return " ".join(f"{v:.17g}" for v in rows.reshape(-1)) + "\n"


def write_pose(path: PathLike, pose: RigidTransform) -> None:
    """One 3×4 row-major matrix on a single line"""
    write_text_atomic(path, format_pose(pose))


def parse_pose(text: str, source: str = "<pose>") -> RigidTransform:
    values = text.split()
    if len(values) != 12:
        raise FormatError(f"{source}: expected 12 reals, found {len(values)}")
    try:
        matrix = np.array([float(v) for v in values]).reshape(3, 4)
    except ValueError as e:
        raise FormatError(f"{source}: {e}") from e
    return RigidTransform.from_matrix(matrix, project=True)


def read_pose(path: PathLike) -> RigidTransform:
    return parse_pose(Path(path).read_text(), str(path))


INTRINSIC_KEYS = ("fx", "fy", "cx", "cy", "width", "height")


def write_intrinsics(path: PathLike, K: CameraIntrinsics) -> None:
    lines = [f"{key} = {getattr(K, key)!r}" for key in INTRINSIC_KEYS]
    write_text_atomic(path, "\n".join(lines) + "\n")


def read_intrinsics(path: PathLike) -> CameraIntrinsics:
    """Key-value file with fx, fy, cx, cy, width, height"""
    values = {}
    for number, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    missing = [k for k in INTRINSIC_KEYS if k not in values]
    if missing:
        raise FormatError(f"{path}: missing intrinsics keys {missing}")
    try:
        return CameraIntrinsics(
            fx=float(values["fx"]),
            fy=float(values["fy"]),
            cx=float(values["cx"]),
            cy=float(values["cy"]),
            width=int(values["width"]),
            height=int(values["height"]),
        )
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
