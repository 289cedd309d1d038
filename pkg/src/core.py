"""Shared math and parameter types for the splatting engine.

Gaussians are stored in array form (one row per splat) so that projection,
compositing and the optimizer can work on whole sets at once. Images are
``(height, width, 3)`` float64 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar, Dict

import numpy as np

# Images are plain arrays; the alias documents intent at call sites.
ImageBuffer = np.ndarray


def sigmoid(x):
    """Numerically stable logistic function (scalar or array)."""
    arr = np.asarray(x, dtype=np.float64)
    flat = np.atleast_1d(arr)
    out = np.empty_like(flat)
    pos = flat >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-flat[pos]))
    ex = np.exp(flat[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out.reshape(arr.shape) if arr.ndim else float(out[0])


def activate_opacity(opacity_logit):
    """Map an opacity logit into (0, 1).

    Saturated outputs are clamped later, at alpha evaluation time.
    """
    return sigmoid(opacity_logit)


def normalize_quaternions(q: np.ndarray) -> np.ndarray:
    """Return unit quaternions (w, x, y, z) along the last axis."""
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def check_unit_quaternions(q: np.ndarray, name: str = "rotation", tolerance: float = 1e-6) -> np.ndarray:
    """Return ``q`` as float64 rows, rejecting any row that is not a unit quaternion.

    Raises:
        ValueError: Naming the first offending row
    """
    q = np.asarray(q, dtype=np.float64).reshape(-1, 4)
    norms = np.linalg.norm(q, axis=-1)
    bad = np.flatnonzero(~np.isfinite(norms) | (np.abs(norms - 1.0) > tolerance))
    if bad.size:
        row = int(bad[0])
        raise ValueError(f"{name}[{row}] must be a unit quaternion, got {q[row].tolist()}")
    return q


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for unit quaternions ``(..., 4)`` in (w, x, y, z) order."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


def quaternion_matrix_backward(q: np.ndarray, dR: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. rotation matrices back onto unit quaternions.

    The result is projected onto the tangent space of the unit sphere, so it
    is the gradient of ``f(q / |q|)`` at ``|q| = 1``.
    """
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    G = dR
    dw = 2.0 * (-z * G[..., 0, 1] + y * G[..., 0, 2] + z * G[..., 1, 0]
                - x * G[..., 1, 2] - y * G[..., 2, 0] + x * G[..., 2, 1])
    dx = 2.0 * (y * G[..., 0, 1] + z * G[..., 0, 2] + y * G[..., 1, 0]
                - 2.0 * x * G[..., 1, 1] - w * G[..., 1, 2] + z * G[..., 2, 0]
                + w * G[..., 2, 1] - 2.0 * x * G[..., 2, 2])
    dy = 2.0 * (-2.0 * y * G[..., 0, 0] + x * G[..., 0, 1] + w * G[..., 0, 2]
                + x * G[..., 1, 0] + z * G[..., 1, 2] - w * G[..., 2, 0]
                + z * G[..., 2, 1] - 2.0 * y * G[..., 2, 2])
    dz = 2.0 * (-2.0 * z * G[..., 0, 0] - w * G[..., 0, 1] + x * G[..., 0, 2]
                + w * G[..., 1, 0] - 2.0 * z * G[..., 1, 1] + y * G[..., 1, 2]
                + x * G[..., 2, 0] + y * G[..., 2, 1])
    grad = np.stack([dw, dx, dy, dz], axis=-1)
    radial = np.sum(grad * q, axis=-1, keepdims=True)
    return grad - radial * q


def quaternion_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product ``a * b`` for (w, x, y, z) quaternions."""
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def matrix_to_quaternion(R: np.ndarray) -> np.ndarray:
    """Unit quaternion for a single rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=np.float64)
    trace = np.trace(R)
    if trace > 0:
        s = 2.0 * np.sqrt(trace + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return normalize_quaternions(np.array(q))


def covariance_from_rotation(R: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Sigma = R S S^T R^T for rotation matrices ``(..., 3, 3)`` and std-devs ``(..., 3)``."""
    M = R * scales[..., None, :]
    cov = M @ np.swapaxes(M, -1, -2)
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


def assemble_covariance(rotation: np.ndarray, log_scale: np.ndarray) -> np.ndarray:
    """Covariance of one Gaussian from a unit quaternion and per-axis log std-dev.

    Args:
        rotation: Unit quaternion (w, x, y, z)
        log_scale: Log of the per-axis standard deviation

    Returns:
        np.ndarray: Symmetric positive-definite 3x3 matrix
    """
    R = quaternion_to_matrix(np.asarray(rotation, dtype=np.float64))
    return covariance_from_rotation(R, np.exp(np.asarray(log_scale, dtype=np.float64)))


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; ``rotation``/``translation`` map world to view space."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"Camera focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"Camera size must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    def composed_with(self, rotation: np.ndarray, translation: np.ndarray) -> "Camera":
        """Camera whose view of ``x`` equals this camera's view of ``rotation @ x + translation``."""
        return Camera(
            fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy,
            rotation=self.rotation @ rotation,
            translation=self.rotation @ translation + self.translation,
            width=self.width, height=self.height,
        )


def new_image(width: int, height: int, value: float = 0.0) -> ImageBuffer:
    return np.full((height, width, 3), value, dtype=np.float64)


def check_image(image: ImageBuffer, name: str = "image") -> ImageBuffer:
    """Validate an image buffer's shape and finiteness."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"{name} must have shape (height, width, 3), got {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError(f"{name} contains non-finite values")
    return image


@dataclass
class GaussianSet:
    """Local-frame parameters of N Gaussians bound to rig triangles.

    Colors are stored post-activation in [0, 1]; opacity as a logit and
    scales as log std-dev, so the optimizer works unconstrained.
    """

    position: np.ndarray  # (N, 3) triangle-frame units
    rotation: np.ndarray  # (N, 4) unit quaternions
    log_scale: np.ndarray  # (N, 3)
    opacity_logit: np.ndarray  # (N,)
    color: np.ndarray  # (N, 3)
    parent_triangle: np.ndarray  # (N,) int

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(-1, 3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(-1, 4)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64).reshape(-1, 3)
        self.opacity_logit = np.asarray(self.opacity_logit, dtype=np.float64).reshape(-1)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(-1, 3)
        self.parent_triangle = np.asarray(self.parent_triangle, dtype=np.int64).reshape(-1)
        n = len(self.position)
        for name in ("rotation", "log_scale", "opacity_logit", "color", "parent_triangle"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"GaussianSet field '{name}' has {len(getattr(self, name))} rows, expected {n}")

    def __len__(self) -> int:
        return len(self.position)

    @property
    def opacity(self) -> np.ndarray:
        return activate_opacity(self.opacity_logit)

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def parameters(self) -> Dict[str, np.ndarray]:
        """Optimizable arrays keyed like ``GradBuffer`` fields (shared, not copied)."""
        return {
            "position": self.position,
            "rotation": self.rotation,
            "log_scale": self.log_scale,
            "opacity_logit": self.opacity_logit,
            "color": self.color,
        }

    def copy(self) -> "GaussianSet":
        return GaussianSet(
            position=self.position.copy(),
            rotation=self.rotation.copy(),
            log_scale=self.log_scale.copy(),
            opacity_logit=self.opacity_logit.copy(),
            color=self.color.copy(),
            parent_triangle=self.parent_triangle.copy(),
        )

    def subset(self, index: np.ndarray) -> "GaussianSet":
        return GaussianSet(
            position=self.position[index],
            rotation=self.rotation[index],
            log_scale=self.log_scale[index],
            opacity_logit=self.opacity_logit[index],
            color=self.color[index],
            parent_triangle=self.parent_triangle[index],
        )

    def enforce_constraints(self) -> None:
        """Re-normalize drifted quaternions and clamp colors after an optimizer step."""
        norms = np.linalg.norm(self.rotation, axis=1)
        drifted = np.abs(norms - 1.0) > 1e-12
        if np.any(drifted):
            self.rotation[drifted] /= norms[drifted, None]
        np.clip(self.color, 0.0, 1.0, out=self.color)


@dataclass
class GradBuffer:
    """Per-Gaussian gradients mirroring every ``GaussianSet`` parameter."""

    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: np.ndarray
    color: np.ndarray
    fields: ClassVar[tuple] = ("position", "rotation", "log_scale", "opacity_logit", "color")

    @classmethod
    def zeros(cls, n: int) -> "GradBuffer":
        return cls(
            position=np.zeros((n, 3)),
            rotation=np.zeros((n, 4)),
            log_scale=np.zeros((n, 3)),
            opacity_logit=np.zeros(n),
            color=np.zeros((n, 3)),
        )

    def __len__(self) -> int:
        return len(self.position)

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.fields}

    def zero_(self) -> None:
        for name in self.fields:
            getattr(self, name).fill(0.0)

    def add_(self, other: "GradBuffer", scale: float = 1.0) -> "GradBuffer":
        for name in self.fields:
            getattr(self, name).__iadd__(scale * getattr(other, name))
        return self

    def scaled(self, scale: float) -> "GradBuffer":
        return GradBuffer(**{name: scale * getattr(self, name) for name in self.fields})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, name))) for name in self.fields)
