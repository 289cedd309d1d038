"""Simplified animatable rig: blendshapes plus one rigid head transform.

Gaussians are stored in per-triangle local frames and ride the deformed mesh:
``x_world = origin + k * R_frame @ x_local``, with ``k = sqrt(area)``.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import GaussianSet, GradBuffer, quaternion_matrix_backward, quaternion_to_matrix

logger = logging.getLogger(__name__)

MIN_TRIANGLE_AREA = 1e-10
MAX_EXPRESSION_WEIGHT = 5.0


class RigError(ValueError):
    """Raised for malformed rigs or animation inputs."""


class DegenerateTriangleError(RigError):
    """Raised when a triangle's area is too small to define a frame."""

    def __init__(self, triangle: int, area: float):
        super().__init__(f"Triangle {triangle} is degenerate (area {area:.3e} <= {MIN_TRIANGLE_AREA:.0e})")
        self.triangle = triangle
        self.area = area


@dataclass(frozen=True)
class RigidPose:
    """Rotation (unit quaternion, w-first) and translation of the head."""

    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(rotation=np.array([1.0, 0.0, 0.0, 0.0]), translation=np.zeros(3))

    @property
    def matrix(self) -> np.ndarray:
        return quaternion_to_matrix(np.asarray(self.rotation, dtype=np.float64))


@dataclass
class AvatarRig:
    """Triangle mesh with linear blendshapes."""

    base_vertices: np.ndarray  # (N, 3)
    triangles: np.ndarray  # (M, 3)
    blendshapes: np.ndarray  # (B, N, 3)

    def __post_init__(self):
        self.base_vertices = np.asarray(self.base_vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        n = len(self.base_vertices)
        self.blendshapes = np.asarray(self.blendshapes, dtype=np.float64).reshape(-1, n, 3)
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise RigError(f"Triangle indices must lie in [0, {n}), got range "
                           f"[{self.triangles.min()}, {self.triangles.max()}]")
        areas = triangle_areas(self.base_vertices, self.triangles)
        bad = np.flatnonzero(areas <= MIN_TRIANGLE_AREA)
        if len(bad):
            raise DegenerateTriangleError(int(bad[0]), float(areas[bad[0]]))

    @property
    def num_blendshapes(self) -> int:
        return len(self.blendshapes)


@dataclass
class FrameSet:
    """Per-triangle binding frames (origins, rotation matrices, similarity scales)."""

    origin: np.ndarray  # (M, 3)
    rotation: np.ndarray  # (M, 3, 3)
    scale: np.ndarray  # (M,)

    def __getitem__(self, index) -> "TriangleFrame":
        return TriangleFrame(self.origin[index], self.rotation[index], float(self.scale[index]))


@dataclass(frozen=True)
class TriangleFrame:
    origin: np.ndarray
    rotation: np.ndarray
    scale: float


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    v0, v1, v2 = (vertices[triangles[:, i]] for i in range(3))
    return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)


def animate(rig: AvatarRig, expression_weights: np.ndarray, pose: Optional[RigidPose] = None) -> np.ndarray:
    """Deform the rig: ``R_pose @ (base + sum_b w_b * delta_b) + t_pose``.

    Args:
        rig: Avatar rig
        expression_weights: One weight per blendshape
        pose: Rigid head pose (identity when omitted)

    Returns:
        np.ndarray: Deformed vertices (N, 3)
    """
    weights = np.asarray(expression_weights, dtype=np.float64).reshape(-1)
    if len(weights) != rig.num_blendshapes:
        raise RigError(f"Expected {rig.num_blendshapes} expression weights, got {len(weights)}")
    if not np.all(np.isfinite(weights)):
        raise RigError("Expression weights must be finite")
    if np.any(np.abs(weights) > MAX_EXPRESSION_WEIGHT):
        raise RigError(f"Expression weights must satisfy |w| <= {MAX_EXPRESSION_WEIGHT}, got {weights}")

    vertices = rig.base_vertices.copy()
    for w, delta in zip(weights, rig.blendshapes):
        if w != 0.0:
            vertices += w * delta
    if pose is None:
        return vertices
    return vertices @ pose.matrix.T + np.asarray(pose.translation, dtype=np.float64)


def triangle_frames(vertices: np.ndarray, triangles: np.ndarray) -> FrameSet:
    """Frames for every triangle of a deformed mesh.

    Column 1 is the normalized first edge, column 3 the unit normal and
    column 2 their cross product.
    """
    v0, v1, v2 = (vertices[triangles[:, i]] for i in range(3))
    e1 = v1 - v0
    n = np.cross(e1, v2 - v0)
    double_area = np.linalg.norm(n, axis=1)
    area = 0.5 * double_area
    bad = np.flatnonzero(area <= MIN_TRIANGLE_AREA)
    if len(bad):
        raise DegenerateTriangleError(int(bad[0]), float(area[bad[0]]))

    x_axis = e1 / np.linalg.norm(e1, axis=1, keepdims=True)
    z_axis = n / double_area[:, None]
    y_axis = np.cross(z_axis, x_axis)
    rotation = np.stack([x_axis, y_axis, z_axis], axis=2)
    origin = (v0 + v1 + v2) / 3.0
    return FrameSet(origin=origin, rotation=rotation, scale=np.sqrt(area))


def triangle_frame(v0, v1, v2) -> TriangleFrame:
    """Binding frame of a single triangle."""
    vertices = np.array([v0, v1, v2], dtype=np.float64)
    return triangle_frames(vertices, np.array([[0, 1, 2]]))[0]


@dataclass
class WorldGaussians:
    """World-space Gaussians plus the binding data needed to pull gradients back."""

    position: np.ndarray  # (N, 3)
    rotation: np.ndarray  # (N, 3, 3)
    scale: np.ndarray  # (N, 3)
    opacity: np.ndarray  # (N,)
    color: np.ndarray  # (N, 3)
    local: GaussianSet
    frame_rotation: np.ndarray  # (N, 3, 3)
    frame_scale: np.ndarray  # (N,)
    local_rotation: np.ndarray  # (N, 3, 3)

    def __len__(self) -> int:
        return len(self.position)


def bind_to_world(gaussians: GaussianSet, frames: FrameSet) -> WorldGaussians:
    """Transform local-frame Gaussians into world space through their parent frames."""
    if len(gaussians) and (gaussians.parent_triangle.min() < 0
                           or gaussians.parent_triangle.max() >= len(frames.origin)):
        raise RigError(f"Gaussian parent_triangle out of range for {len(frames.origin)} triangles")
    parent = gaussians.parent_triangle
    R_f = frames.rotation[parent]
    k = frames.scale[parent]
    R_local = quaternion_to_matrix(gaussians.rotation)
    position = frames.origin[parent] + k[:, None] * np.einsum("nij,nj->ni", R_f, gaussians.position)
    return WorldGaussians(
        position=position,
        rotation=R_f @ R_local,
        scale=k[:, None] * np.exp(gaussians.log_scale),
        opacity=gaussians.opacity,
        color=gaussians.color.copy(),
        local=gaussians,
        frame_rotation=R_f,
        frame_scale=k,
        local_rotation=R_local,
    )


def bind_gaussian(position_local, rotation_local, log_scale, frame: TriangleFrame):
    """World position, rotation matrix and scales of one bound Gaussian."""
    R_local = quaternion_to_matrix(np.asarray(rotation_local, dtype=np.float64))
    position = frame.origin + frame.scale * frame.rotation @ np.asarray(position_local, dtype=np.float64)
    return position, frame.rotation @ R_local, frame.scale * np.exp(np.asarray(log_scale, dtype=np.float64))


def bind_backward(world: WorldGaussians, d_position: np.ndarray, d_rotation: np.ndarray,
                  d_scale: np.ndarray, d_opacity: np.ndarray, d_color: np.ndarray) -> GradBuffer:
    """Chain world-space gradients back onto the local parameters."""
    local = world.local
    k = world.frame_scale
    R_f = world.frame_rotation
    grads = GradBuffer.zeros(len(local))
    grads.position[:] = k[:, None] * np.einsum("nji,nj->ni", R_f, d_position)
    d_local_rot = np.swapaxes(R_f, 1, 2) @ d_rotation
    grads.rotation[:] = quaternion_matrix_backward(local.rotation, d_local_rot)
    grads.log_scale[:] = d_scale * world.scale
    opacity = world.opacity
    grads.opacity_logit[:] = d_opacity * opacity * (1.0 - opacity)
    grads.color[:] = d_color
    return grads
