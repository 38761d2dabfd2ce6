"""
Rigid transforms in SE(3)
T = [R | t], apply(T, p) = R·p + t
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import InvalidConfig

ORTHONORMAL_TOL = 1e-9


def orthonormalize(rotation: np.ndarray) -> np.ndarray:
    """Project a near-rotation onto SO(3) (closest matrix in Frobenius norm)"""
    u, _, vt = np.linalg.svd(np.asarray(rotation, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def axis_rotation(axis: str, degrees: float) -> np.ndarray:
    """Right-handed rotation about a coordinate axis ('x', 'y' or 'z')"""
    a = np.deg2rad(degrees)
    c, s = np.cos(a), np.sin(a)
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == "y":
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    if axis == "z":
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    raise ValueError(f"unknown axis: {axis}")


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (3×3, orthonormal, det +1) plus translation in meters"""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise InvalidConfig("transform contains non-finite values")
        residual = np.max(np.abs(rotation.T @ rotation - np.eye(3)))
        if residual >= ORTHONORMAL_TOL or np.linalg.det(rotation) <= 0:
            raise InvalidConfig(f"rotation is not in SO(3) (|RᵀR - I| = {residual:.3e})")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, project: bool = False) -> "RigidTransform":
        """
        Build from a 3×4 or 4×4 matrix

        Args:
            matrix: [R | t] (row-major)
            project: re-orthonormalize R first (for poses read from text at
                limited precision)
        """
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape not in ((3, 4), (4, 4)):
            raise InvalidConfig(f"expected a 3x4 or 4x4 matrix, got {m.shape}")
        rotation = orthonormalize(m[:3, :3]) if project else m[:3, :3]
        return cls(rotation, m[:3, 3])

    @classmethod
    def from_yaw_pitch_roll(
        cls,
        yaw: float = 0.0,
        pitch: float = 0.0,
        roll: float = 0.0,
        translation: Sequence[float] = (0.0, 0.0, 0.0),
    ) -> "RigidTransform":
        """
        Camera-frame Euler construction (degrees)

        Y is the up axis: yaw turns about Y, pitch about X, roll about Z,
        applied intrinsically in that order.
        """
        rotation = axis_rotation("y", yaw) @ axis_rotation("x", pitch) @ axis_rotation("z", roll)
        return cls(orthonormalize(rotation), np.asarray(translation, dtype=np.float64))

    def as_matrix(self) -> np.ndarray:
        """4×4 homogeneous matrix"""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply other first, then self"""
        rotation = orthonormalize(self.rotation @ other.rotation)
        return RigidTransform(rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a 3-vector or an N×3 array of points"""
        p = np.asarray(points, dtype=np.float64)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol, rtol=0.0)
            and np.allclose(self.translation, other.translation, atol=atol, rtol=0.0)
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def invert(t: RigidTransform) -> RigidTransform:
    return t.inverse()


def apply(t: RigidTransform, points: np.ndarray) -> np.ndarray:
    return t.apply(points)
