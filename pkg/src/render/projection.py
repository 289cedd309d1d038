"""EWA-style projection of world-space Gaussians onto the image plane."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..avatar.rig import WorldGaussians, bind_backward
from ..core import Camera, GaussianSet, GradBuffer, covariance_from_rotation

logger = logging.getLogger(__name__)

NEAR_PLANE = 0.01
BLUR_VARIANCE = 0.3  # px^2, added isotropically to every screen covariance
MIN_RAW_DETERMINANT = 1e-12
ALPHA_SKIP = 1.0 / 255.0


@dataclass(frozen=True)
class Splat2D:
    """One projected Gaussian ready for compositing."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    inv_cov2d: np.ndarray
    depth: float
    peak_opacity: float
    color: np.ndarray
    source_index: int


@dataclass
class SplatBatch:
    """All visible splats of one view, plus what the backward pass needs.

    Rows are in source order (not depth order); the rasterizer sorts.
    """

    mean2d: np.ndarray  # (M, 2)
    cov2d: np.ndarray  # (M, 2, 2)
    inv_cov2d: np.ndarray  # (M, 2, 2)
    depth: np.ndarray  # (M,)
    peak_opacity: np.ndarray  # (M,)
    color: np.ndarray  # (M, 3)
    source_index: np.ndarray  # (M,)
    extent: np.ndarray  # (M, 2) half-size of the box outside which alpha < 1/255
    camera: Camera
    world: Optional[WorldGaussians] = None
    view: Optional[np.ndarray] = None  # (M, 3)
    jacobian: Optional[np.ndarray] = None  # (M, 2, 3)
    cov3d: Optional[np.ndarray] = None  # (M, 3, 3)

    def __len__(self) -> int:
        return len(self.depth)

    def __getitem__(self, i: int) -> Splat2D:
        return Splat2D(
            mean2d=self.mean2d[i],
            cov2d=self.cov2d[i],
            inv_cov2d=self.inv_cov2d[i],
            depth=float(self.depth[i]),
            peak_opacity=float(self.peak_opacity[i]),
            color=self.color[i],
            source_index=int(self.source_index[i]),
        )

    @classmethod
    def from_splats(cls, splats, camera: Camera) -> "SplatBatch":
        """Batch hand-built ``Splat2D`` records (no backward support)."""
        splats = list(splats)
        if not splats:
            return cls._empty(camera)
        cov2d = np.array([s.cov2d for s in splats], dtype=np.float64)
        opacity = np.array([s.peak_opacity for s in splats], dtype=np.float64)
        return cls(
            mean2d=np.array([s.mean2d for s in splats], dtype=np.float64),
            cov2d=cov2d,
            inv_cov2d=np.array([s.inv_cov2d for s in splats], dtype=np.float64),
            depth=np.array([s.depth for s in splats], dtype=np.float64),
            peak_opacity=opacity,
            color=np.array([s.color for s in splats], dtype=np.float64),
            source_index=np.array([s.source_index for s in splats], dtype=np.int64),
            extent=_alpha_extent(cov2d, opacity),
            camera=camera,
        )

    @classmethod
    def _empty(cls, camera: Camera) -> "SplatBatch":
        return cls(
            mean2d=np.zeros((0, 2)), cov2d=np.zeros((0, 2, 2)), inv_cov2d=np.zeros((0, 2, 2)),
            depth=np.zeros(0), peak_opacity=np.zeros(0), color=np.zeros((0, 3)),
            source_index=np.zeros(0, dtype=np.int64), extent=np.zeros((0, 2)), camera=camera,
        )


def _alpha_extent(cov2d: np.ndarray, opacity: np.ndarray) -> np.ndarray:
    """Axis-aligned half-extent of the region where ``opacity * G >= 1/255``."""
    ratio = np.maximum(opacity / ALPHA_SKIP, 1.0)
    mahalanobis = np.sqrt(2.0 * np.log(ratio)) * (1.0 + 1e-9)
    sigma = np.sqrt(np.stack([cov2d[:, 0, 0], cov2d[:, 1, 1]], axis=1))
    return mahalanobis[:, None] * sigma


def project_world(world: WorldGaussians, camera: Camera) -> SplatBatch:
    """Project world-space Gaussians; culled splats are simply absent from the batch.

    A splat is culled when its depth is at or before the near plane, when its
    un-blurred screen covariance is degenerate, or when its 3-sigma box misses
    the viewport.
    """
    n = len(world)
    if n == 0:
        return SplatBatch._empty(camera)

    R_c = camera.rotation
    view = world.position @ R_c.T + camera.translation
    z = view[:, 2]
    keep = z > NEAR_PLANE
    idx = np.flatnonzero(keep)
    view = view[idx]
    x, y, z = view[:, 0], view[:, 1], view[:, 2]

    J = np.zeros((len(idx), 2, 3))
    J[:, 0, 0] = camera.fx / z
    J[:, 0, 2] = -camera.fx * x / (z * z)
    J[:, 1, 1] = camera.fy / z
    J[:, 1, 2] = -camera.fy * y / (z * z)

    cov3d = covariance_from_rotation(world.rotation[idx], world.scale[idx])
    T = J @ R_c
    raw = T @ cov3d @ np.swapaxes(T, 1, 2)
    raw = 0.5 * (raw + np.swapaxes(raw, 1, 2))
    det_raw = raw[:, 0, 0] * raw[:, 1, 1] - raw[:, 0, 1] * raw[:, 1, 0]
    cov2d = raw + BLUR_VARIANCE * np.eye(2)

    mean2d = np.stack([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy], axis=1)
    sigma = np.sqrt(np.stack([cov2d[:, 0, 0], cov2d[:, 1, 1]], axis=1))
    lo = mean2d - 3.0 * sigma
    hi = mean2d + 3.0 * sigma
    on_screen = (hi[:, 0] >= 0) & (lo[:, 0] <= camera.width - 1) & (hi[:, 1] >= 0) & (lo[:, 1] <= camera.height - 1)
    valid = (det_raw >= MIN_RAW_DETERMINANT) & on_screen

    degenerate = int(np.sum(det_raw < MIN_RAW_DETERMINANT))
    if degenerate:
        logger.warning("Culled %d splats with degenerate screen covariance", degenerate)
    logger.debug("Projected %d/%d splats (%d behind camera)", int(valid.sum()), n, n - len(idx))

    sel = np.flatnonzero(valid)
    src = idx[sel]
    cov2d = cov2d[sel]
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 1, 0]
    inv = np.empty_like(cov2d)
    inv[:, 0, 0] = cov2d[:, 1, 1] / det
    inv[:, 1, 1] = cov2d[:, 0, 0] / det
    inv[:, 0, 1] = -cov2d[:, 0, 1] / det
    inv[:, 1, 0] = -cov2d[:, 1, 0] / det
    opacity = world.opacity[src]

    return SplatBatch(
        mean2d=mean2d[sel],
        cov2d=cov2d,
        inv_cov2d=inv,
        depth=z[sel],
        peak_opacity=opacity,
        color=world.color[src],
        source_index=src,
        extent=_alpha_extent(cov2d, opacity),
        camera=camera,
        world=world,
        view=view[sel],
        jacobian=J[sel],
        cov3d=cov3d[sel],
    )


def project(position: np.ndarray, rotation: np.ndarray, scale: np.ndarray, opacity: float,
            color: np.ndarray, camera: Camera) -> Optional[Splat2D]:
    """Project one world-space Gaussian (rotation as a 3x3 matrix); None when culled."""
    local = GaussianSet(
        position=np.zeros((1, 3)), rotation=[[1.0, 0.0, 0.0, 0.0]], log_scale=np.zeros((1, 3)),
        opacity_logit=[0.0], color=np.asarray(color).reshape(1, 3), parent_triangle=[0],
    )
    world = WorldGaussians(
        position=np.asarray(position, dtype=np.float64).reshape(1, 3),
        rotation=np.asarray(rotation, dtype=np.float64).reshape(1, 3, 3),
        scale=np.asarray(scale, dtype=np.float64).reshape(1, 3),
        opacity=np.array([opacity], dtype=np.float64),
        color=np.asarray(color, dtype=np.float64).reshape(1, 3),
        local=local,
        frame_rotation=np.eye(3)[None],
        frame_scale=np.ones(1),
        local_rotation=np.asarray(rotation, dtype=np.float64).reshape(1, 3, 3),
    )
    batch = project_world(world, camera)
    return batch[0] if len(batch) else None


def project_backward(batch: SplatBatch, d_mean2d: np.ndarray, d_inv_cov2d: np.ndarray,
                     d_opacity: np.ndarray, d_color: np.ndarray) -> GradBuffer:
    """Chain screen-space splat gradients through projection and binding.

    Args:
        batch: Splats produced by ``project_world``
        d_mean2d: (M, 2) gradient w.r.t. screen means
        d_inv_cov2d: (M, 2, 2) gradient w.r.t. the inverse screen covariances
        d_opacity: (M,) gradient w.r.t. activated peak opacity
        d_color: (M, 3) gradient w.r.t. colors

    Returns:
        GradBuffer: Gradients on the local Gaussian parameters
    """
    world = batch.world
    if world is None or batch.jacobian is None:
        raise ValueError("Splat batch was not produced by project_world; cannot differentiate")
    camera = batch.camera
    n = len(world)
    m = len(batch)
    d_position = np.zeros((n, 3))
    d_rotation = np.zeros((n, 3, 3))
    d_scale = np.zeros((n, 3))
    d_opac = np.zeros(n)
    d_col = np.zeros((n, 3))
    if m == 0:
        return bind_backward(world, d_position, d_rotation, d_scale, d_opac, d_col)

    Q = batch.inv_cov2d
    G2 = -Q @ d_inv_cov2d @ Q
    G2 = 0.5 * (G2 + np.swapaxes(G2, 1, 2))

    R_c = camera.rotation
    J = batch.jacobian
    T = J @ R_c
    cov3d = batch.cov3d
    G3 = np.swapaxes(T, 1, 2) @ G2 @ T
    dT = 2.0 * G2 @ T @ cov3d
    dJ = dT @ R_c.T

    x, y, z = batch.view[:, 0], batch.view[:, 1], batch.view[:, 2]
    fx, fy = camera.fx, camera.fy
    du, dv = d_mean2d[:, 0], d_mean2d[:, 1]
    z2 = z * z
    z3 = z2 * z
    d_view = np.empty((m, 3))
    d_view[:, 0] = dJ[:, 0, 2] * (-fx / z2) + du * fx / z
    d_view[:, 1] = dJ[:, 1, 2] * (-fy / z2) + dv * fy / z
    d_view[:, 2] = (dJ[:, 0, 0] * (-fx / z2) + dJ[:, 0, 2] * (2.0 * fx * x / z3)
                    + dJ[:, 1, 1] * (-fy / z2) + dJ[:, 1, 2] * (2.0 * fy * y / z3)
                    - du * fx * x / z2 - dv * fy * y / z2)

    src = batch.source_index
    R_w = world.rotation[src]
    s = world.scale[src]
    M = R_w * s[:, None, :]
    dM = 2.0 * G3 @ M

    # Each source appears at most once per batch, so plain assignment is safe.
    d_position[src] = d_view @ R_c
    d_rotation[src] = dM * s[:, None, :]
    d_scale[src] = np.sum(dM * R_w, axis=1)
    d_opac[src] = d_opacity
    d_col[src] = d_color
    return bind_backward(world, d_position, d_rotation, d_scale, d_opac, d_col)
