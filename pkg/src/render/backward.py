"""Analytic gradients of the compositor, projection and binding.

Every gradient term of contribution k carries the same ``w_k`` factor as its
forward term, so occluded layers receive correspondingly faded updates.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..core import GradBuffer
from .projection import project_backward
from .rasterizer import BlendMode, RenderOutput, TileCache, map_tiles

logger = logging.getLogger(__name__)


class WeightGradient(str, Enum):
    """How gradients treat the WABE weights."""
    DETACHED = "detached"  # w_k is a constant
    FULL = "full"  # w_k is differentiated through the transmittance


class AccumulateOrder(str, Enum):
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class BackwardConfig:
    wabe_weight_gradient: WeightGradient = WeightGradient.DETACHED
    accumulate_order: AccumulateOrder = AccumulateOrder.DETERMINISTIC
    threads: int = 1


class CacheMissingError(RuntimeError):
    """Raised when backward is called on a render produced without caching."""


class NonFiniteGradientError(ValueError):
    """Raised when the incoming pixel gradient contains NaN or infinity."""

    def __init__(self, row: int, col: int):
        super().__init__(f"Non-finite incoming gradient at pixel (row={row}, col={col})")
        self.row = row
        self.col = col


@dataclass
class SplatGradients:
    """Screen-space gradients per batch row."""

    mean2d: np.ndarray  # (M, 2)
    inv_cov2d: np.ndarray  # (M, 2, 2)
    opacity: np.ndarray  # (M,)
    color: np.ndarray  # (M, 3)

    @classmethod
    def zeros(cls, m: int) -> "SplatGradients":
        return cls(np.zeros((m, 2)), np.zeros((m, 2, 2)), np.zeros(m), np.zeros((m, 3)))


def _tile_backward(output: RenderOutput, tile: TileCache, grad_pixels: np.ndarray, full: bool):
    K = len(tile.ids)
    if K == 0:
        return None
    batch = output.batch
    G = grad_pixels[tile.rows, tile.cols].reshape(-1, 3)
    ids = tile.ids
    color = batch.color[ids]
    alpha, T = tile.alpha, tile.transmittance

    cG = np.einsum("pc,kc->pk", G, color)
    blend = alpha * T
    if tile.weight is not None:
        blend = tile.weight * blend
    d_color = np.einsum("pk,pc->kc", blend, G)

    later = cG * blend
    if full and tile.weight is not None:
        later = later * (1.0 + output.mode.beta * T)
    suffix = np.cumsum(later[:, ::-1], axis=1)[:, ::-1] - later
    direct = T * cG if tile.weight is None else tile.weight * T * cG
    d_alpha = direct - suffix / (1.0 - alpha)
    d_alpha = np.where(tile.active & ~tile.clamped, d_alpha, 0.0)

    d_opacity = np.einsum("pk,pk->k", d_alpha, tile.gauss)
    d_power = d_alpha * alpha
    mean = batch.mean2d[ids]
    Q = batch.inv_cov2d[ids]
    dx = tile.px[:, None] - mean[None, :, 0]
    dy = tile.py[:, None] - mean[None, :, 1]
    q01 = 0.5 * (Q[:, 0, 1] + Q[:, 1, 0])
    d_mean = np.stack([
        np.einsum("pk,pk->k", d_power, Q[:, 0, 0] * dx + q01 * dy),
        np.einsum("pk,pk->k", d_power, q01 * dx + Q[:, 1, 1] * dy),
    ], axis=1)
    d_Q = np.empty((K, 2, 2))
    d_Q[:, 0, 0] = -0.5 * np.einsum("pk,pk->k", d_power, dx * dx)
    d_Q[:, 0, 1] = -0.5 * np.einsum("pk,pk->k", d_power, dx * dy)
    d_Q[:, 1, 0] = d_Q[:, 0, 1]
    d_Q[:, 1, 1] = -0.5 * np.einsum("pk,pk->k", d_power, dy * dy)
    return ids, d_mean, d_Q, d_opacity, d_color


def backward_splats(output: RenderOutput, grad_pixels: np.ndarray,
                    config: BackwardConfig = BackwardConfig()) -> SplatGradients:
    """Screen-space gradients, reduced over tiles in fixed tile order."""
    if not output.cached:
        raise CacheMissingError("backward needs a render produced with cache=True")
    grad_pixels = np.asarray(grad_pixels, dtype=np.float64)
    if grad_pixels.shape != output.image.shape:
        raise ValueError(f"Pixel gradient shape {grad_pixels.shape} does not match image {output.image.shape}")
    bad = ~np.isfinite(grad_pixels).all(axis=2)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise NonFiniteGradientError(int(row), int(col))

    full = config.wabe_weight_gradient == WeightGradient.FULL
    results = map_tiles(
        lambda tile: _tile_backward(output, tile, grad_pixels, full),
        [(tile,) for tile in output.tiles],
        config.threads,
    )
    grads = SplatGradients.zeros(len(output.batch))
    for result in results:
        if result is None:
            continue
        ids, d_mean, d_Q, d_opacity, d_color = result
        # ids are unique within a tile
        grads.mean2d[ids] += d_mean
        grads.inv_cov2d[ids] += d_Q
        grads.opacity[ids] += d_opacity
        grads.color[ids] += d_color
    return grads


def backward(output: RenderOutput, grad_pixels: np.ndarray, mode: Optional[BlendMode] = None,
             config: BackwardConfig = BackwardConfig()) -> GradBuffer:
    """Gradients of a scalar loss on every local Gaussian parameter.

    Args:
        output: Cached render
        grad_pixels: dL/dC with the image's shape
        mode: Blend mode the render was produced with (checked when given)
        config: Weight-gradient policy and thread count

    Returns:
        GradBuffer: One row per Gaussian of the rendered set; Gaussians without
        a surviving contribution get exactly zero
    """
    if mode is not None and mode != output.mode:
        raise ValueError(f"Render was produced in mode {output.mode}, backward requested {mode}")
    splat_grads = backward_splats(output, grad_pixels, config)
    return project_backward(output.batch, splat_grads.mean2d, splat_grads.inv_cov2d,
                            splat_grads.opacity, splat_grads.color)
