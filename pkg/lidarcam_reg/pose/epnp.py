"""
EPnP: closed-form Perspective-n-Point

World points are written as barycentric combinations of control points
(four in general, three when the points are coplanar). The camera-frame
control points lie in the null space of M; the coefficients β of that
null-space combination are estimated for N = 1..4 basis vectors,
refined by Gauss-Newton on the inter-control-point distances, and the
candidate with the lowest reprojection error wins.
"""

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np

from ..errors import DegenerateConfiguration, InsufficientCorrespondences, InvalidConfig
from ..geometry.camera import CameraIntrinsics
from ..geometry.transforms import RigidTransform
from .lift import Correspondences

logger = logging.getLogger(__name__)

MIN_POINTS = 4
PLANAR_RATIO = 1e-12
GAUSS_NEWTON_STEPS = 10


@dataclass(frozen=True)
class ControlFrame:
    """Control points in the world frame and barycentric coordinates of the inputs"""

    control: np.ndarray  # nc×3
    alphas: np.ndarray  # n×nc
    planar: bool


def choose_control_points(points: np.ndarray) -> ControlFrame:
    """
    Centroid plus principal directions scaled by their spread

    Raises:
        DegenerateConfiguration for coincident or collinear points
    """
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    eig = sv ** 2
    if eig[0] <= 0 or eig[1] <= PLANAR_RATIO * eig[0]:
        raise DegenerateConfiguration("points are coincident or collinear")
    planar = eig[2] <= PLANAR_RATIO * eig[0]
    dims = 2 if planar else 3
    n = len(points)
    axes = vt[:dims] * np.sqrt(eig[:dims] / n)[:, None]
    control = np.vstack([centroid, centroid + axes])

    basis = (control[1:] - centroid).T  # 3×dims
    coords, *_ = np.linalg.lstsq(basis, centered.T, rcond=None)
    alphas = np.column_stack([1.0 - coords.sum(axis=0), coords.T])
    return ControlFrame(control, alphas, planar)


def _build_m(alphas: np.ndarray, normalized: np.ndarray) -> np.ndarray:
    n, nc = alphas.shape
    m = np.zeros((2 * n, 3 * nc))
    for j in range(nc):
        m[0::2, 3 * j] = alphas[:, j]
        m[0::2, 3 * j + 2] = -alphas[:, j] * normalized[:, 0]
        m[1::2, 3 * j + 1] = alphas[:, j]
        m[1::2, 3 * j + 2] = -alphas[:, j] * normalized[:, 1]
    return m


def _pair_deltas(vectors: np.ndarray, nc: int) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """(pairs × N × 3) control-point differences of each null-space vector"""
    pairs = list(combinations(range(nc), 2))
    cps = vectors.T.reshape(vectors.shape[1], nc, 3)  # N×nc×3
    deltas = np.stack([cps[:, a] - cps[:, b] for a, b in pairs])
    return deltas, pairs


def _initial_betas(deltas: np.ndarray, dist2: np.ndarray, count: int) -> Optional[np.ndarray]:
    dv = deltas[:, :count]
    if count == 1:
        norms = np.linalg.norm(dv[:, 0], axis=1)
        denom = np.sum(norms ** 2)
        if denom <= 0:
            return None
        return np.array([np.sum(norms * np.sqrt(dist2)) / denom])

    # linearized: unknowns β_k β_l for k <= l (only β_0 β_k with four vectors)
    if count == 4:
        terms = [(0, k) for k in range(count)]
    else:
        terms = [(k, l) for k in range(count) for l in range(k, count)]
    if len(terms) > len(dist2):
        return None
    L = np.column_stack([
        (1.0 if k == l else 2.0) * np.einsum("pi,pi->p", dv[:, k], dv[:, l]) for k, l in terms
    ])
    b, *_ = np.linalg.lstsq(L, dist2, rcond=None)
    products = dict(zip(terms, b))
    betas = np.zeros(count)
    betas[0] = np.sqrt(abs(products[(0, 0)]))
    if count == 4:
        if betas[0] == 0:
            return None
        betas[1:] = [products[(0, k)] / betas[0] for k in range(1, count)]
        return betas
    for k in range(1, count):
        betas[k] = np.sqrt(abs(products[(k, k)])) * (1.0 if products[(0, k)] >= 0 else -1.0)
    return betas


def _gauss_newton(deltas: np.ndarray, dist2: np.ndarray, betas: np.ndarray) -> np.ndarray:
    dv = deltas[:, :len(betas)]
    for _ in range(GAUSS_NEWTON_STEPS):
        combined = np.einsum("pki,k->pi", dv, betas)
        residual = np.einsum("pi,pi->p", combined, combined) - dist2
        jac = 2.0 * np.einsum("pi,pki->pk", combined, dv)
        step, *_ = np.linalg.lstsq(jac, -residual, rcond=None)
        betas = betas + step
        if np.max(np.abs(step)) <= 1e-15 * max(1.0, np.max(np.abs(betas))):
            break
    return betas


def procrustes(world: np.ndarray, camera: np.ndarray) -> RigidTransform:
    """Least-squares rotation and translation mapping world onto camera points"""
    cw, cc = world.mean(axis=0), camera.mean(axis=0)
    h = (camera - cc).T @ (world - cw)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    rotation = u @ np.diag([1.0, 1.0, d]) @ vt
    return RigidTransform(rotation, cc - rotation @ cw)


def reprojection_errors(pose: RigidTransform, points: np.ndarray, pixels: np.ndarray,
                        K: CameraIntrinsics) -> np.ndarray:
    """Pixel distances; +inf for points at or behind the camera"""
    cam = pose.apply(points).reshape(-1, 3)
    err = np.full(len(cam), np.inf)
    front = cam[:, 2] > 0
    u = K.fx * cam[front, 0] / cam[front, 2] + K.cx
    v = K.fy * cam[front, 1] / cam[front, 2] + K.cy
    err[front] = np.hypot(u - pixels[front, 0], v - pixels[front, 1])
    return err


def epnp_arrays(points: np.ndarray, pixels: np.ndarray, K: CameraIntrinsics) -> RigidTransform:
    """EPnP on raw N×3 points and N×2 pixels"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    if len(points) < MIN_POINTS:
        raise InsufficientCorrespondences(f"EPnP needs {MIN_POINTS} correspondences, got {len(points)}")
    frame = choose_control_points(points)
    nc = len(frame.control)
    normalized = np.column_stack([(pixels[:, 0] - K.cx) / K.fx, (pixels[:, 1] - K.cy) / K.fy])
    _, _, vt = np.linalg.svd(_build_m(frame.alphas, normalized))
    # right singular vectors of the smallest singular values, smallest first
    null = vt[::-1][:4].T

    deltas, pairs = _pair_deltas(null, nc)
    dist2 = np.array([np.sum((frame.control[a] - frame.control[b]) ** 2) for a, b in pairs])

    best: Optional[Tuple[float, RigidTransform]] = None
    for count in (1, 2, 3, 4):
        betas = _initial_betas(deltas, dist2, count)
        if betas is None:
            continue
        betas = _gauss_newton(deltas, dist2, betas)
        control_cam = (null[:, :count] @ betas).reshape(nc, 3)
        camera_pts = frame.alphas @ control_cam
        if np.mean(camera_pts[:, 2]) < 0:
            camera_pts = -camera_pts
        try:
            pose = procrustes(points, camera_pts)
        except (InvalidConfig, np.linalg.LinAlgError) as e:
            logger.debug("EPnP candidate N=%d rejected: %s", count, e)
            continue
        err = float(np.mean(reprojection_errors(pose, points, pixels, K)))
        if best is None or err < best[0]:
            best = (err, pose)
    if best is None:
        raise DegenerateConfiguration("no EPnP candidate produced a valid pose")
    return best[1]


def epnp(corrs: Correspondences, K: CameraIntrinsics) -> RigidTransform:
    """
    Pose mapping the correspondences' 3D points into the camera frame

    Raises:
        InsufficientCorrespondences with fewer than 4 pairs
        DegenerateConfiguration for coincident or collinear points
    """
    return epnp_arrays(corrs.points3d, corrs.pixels, K)
