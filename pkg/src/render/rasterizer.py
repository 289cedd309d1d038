"""Tiled front-to-back compositing under standard or weighted alpha blending.

Standard blending gives ``C = sum_k c_k a_k T_k`` with ``T_k = prod_{j<k}(1 - a_j)``.
Weighted blending multiplies each term by ``w_k = exp(-beta * (1 - T_k))``,
which leaves fully visible layers untouched and fades occluded ones.
"""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional

import numpy as np

from ..core import Camera, ImageBuffer
from .projection import ALPHA_SKIP, Splat2D, SplatBatch

logger = logging.getLogger(__name__)

ALPHA_MAX = 0.99
TRANSMITTANCE_MIN = 1e-4
TILE_SIZE = 16
DEFAULT_BETA = 6.0


class BlendKind(str, Enum):
    """Supported compositing equations."""
    STANDARD = "standard"
    WABE = "wabe"


@dataclass(frozen=True)
class BlendMode:
    kind: BlendKind = BlendKind.STANDARD
    beta: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.beta) or self.beta < 0:
            raise ValueError(f"WABE beta must be finite and >= 0, got {self.beta}")

    @classmethod
    def standard(cls) -> "BlendMode":
        return cls(BlendKind.STANDARD, 0.0)

    @classmethod
    def wabe(cls, beta: float = DEFAULT_BETA) -> "BlendMode":
        return cls(BlendKind.WABE, float(beta))

    @property
    def weighted(self) -> bool:
        return self.kind == BlendKind.WABE

    def __str__(self) -> str:
        return f"wabe(beta={self.beta:g})" if self.weighted else "standard"


class _CallCounter:
    """Thread-safe counter of weight evaluations, read by tests and debug logging."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def increment(self) -> None:
        with self._lock:
            self.count += 1


wabe_weight_calls = _CallCounter()


def wabe_weight(T_before, beta: float):
    """Per-layer weight ``exp(-beta * (1 - T_before))`` (scalar or array)."""
    if not math.isfinite(beta) or beta < 0:
        raise ValueError(f"WABE beta must be finite and >= 0, got {beta}")
    wabe_weight_calls.increment()
    T = np.asarray(T_before, dtype=np.float64)
    w = np.exp(-beta * (1.0 - T))
    return w if w.ndim else float(w)


def alpha_at(splat: Splat2D, pixel) -> float:
    """Opacity of a splat at a pixel, clamped to ``ALPHA_MAX``.

    Values below 1/255 are returned as-is; the compositor skips them.
    """
    d = np.asarray(pixel, dtype=np.float64) - splat.mean2d
    Q = splat.inv_cov2d
    power = -0.5 * (Q[0, 0] * d[0] * d[0] + (Q[0, 1] + Q[1, 0]) * d[0] * d[1] + Q[1, 1] * d[1] * d[1])
    return min(ALPHA_MAX, splat.peak_opacity * math.exp(power))


@dataclass
class TileCache:
    """Everything one tile's backward pass needs."""

    rows: slice
    cols: slice
    ids: np.ndarray  # (K,) batch rows in compositing order
    sources: np.ndarray  # (K,) source indices, for replay
    px: np.ndarray  # (P,) pixel x
    py: np.ndarray  # (P,) pixel y
    gauss: np.ndarray  # (P, K) unscaled Gaussian falloff
    alpha: np.ndarray  # (P, K) composited alpha, 0 where not contributing
    active: np.ndarray  # (P, K) contribution survived skip and early stop
    clamped: np.ndarray  # (P, K) alpha saturated at ALPHA_MAX
    transmittance: np.ndarray  # (P, K) T before each layer
    weight: Optional[np.ndarray]  # (P, K) WABE weights, None in standard mode


@dataclass(frozen=True)
class ContributionRecord:
    source_index: int
    alpha: float
    transmittance: float
    weight: float


@dataclass
class RenderOutput:
    image: ImageBuffer
    final_transmittance: np.ndarray  # (H, W)
    batch: SplatBatch
    mode: BlendMode
    tile_size: int
    tiles: Optional[List[TileCache]] = None

    @property
    def cached(self) -> bool:
        return self.tiles is not None

    def tile_for(self, row: int, col: int) -> TileCache:
        if self.tiles is None:
            raise ValueError("Render was produced without caching")
        tiles_x = -(-self.image.shape[1] // self.tile_size)
        return self.tiles[(row // self.tile_size) * tiles_x + col // self.tile_size]

    def contributions(self, row: int, col: int) -> List[ContributionRecord]:
        """Ordered (front to back) surviving contributions at one pixel."""
        tile = self.tile_for(row, col)
        p = (row - tile.rows.start) * (tile.cols.stop - tile.cols.start) + (col - tile.cols.start)
        records = []
        for k in np.flatnonzero(tile.active[p]):
            records.append(ContributionRecord(
                source_index=int(tile.sources[k]),
                alpha=float(tile.alpha[p, k]),
                transmittance=float(tile.transmittance[p, k]),
                weight=float(tile.weight[p, k]) if tile.weight is not None else 1.0,
            ))
        return records


def depth_order(batch: SplatBatch) -> np.ndarray:
    """Ascending depth, ties broken by source index."""
    return np.lexsort((batch.source_index, batch.depth))


def _tile_jobs(batch: SplatBatch, width: int, height: int, tile_size: int):
    order = depth_order(batch)
    tiles_x = -(-width // tile_size)
    tiles_y = -(-height // tile_size)
    mean = batch.mean2d[order]
    ext = batch.extent[order]
    tx0 = np.floor((mean[:, 0] - ext[:, 0]) / tile_size)
    tx1 = np.floor((mean[:, 0] + ext[:, 0]) / tile_size)
    ty0 = np.floor((mean[:, 1] - ext[:, 1]) / tile_size)
    ty1 = np.floor((mean[:, 1] + ext[:, 1]) / tile_size)
    jobs = []
    for ty in range(tiles_y):
        rows = slice(ty * tile_size, min((ty + 1) * tile_size, height))
        in_row = (ty0 <= ty) & (ty1 >= ty)
        for tx in range(tiles_x):
            cols = slice(tx * tile_size, min((tx + 1) * tile_size, width))
            mask = in_row & (tx0 <= tx) & (tx1 >= tx)
            jobs.append((rows, cols, order[mask]))
    return jobs


def _replay_jobs(batch: SplatBatch, replay: RenderOutput):
    row_of = {int(s): i for i, s in enumerate(batch.source_index)}
    jobs = []
    for tile in replay.tiles:
        try:
            ids = np.array([row_of[int(s)] for s in tile.sources], dtype=np.int64)
        except KeyError as e:
            raise ValueError(f"Replay render references splat {e.args[0]} which is no longer visible") from e
        jobs.append((tile.rows, tile.cols, ids))
    return jobs


def _composite_tile(batch: SplatBatch, mode: BlendMode, rows: slice, cols: slice, ids: np.ndarray,
                    frozen: Optional[TileCache], freeze_weights: bool):
    ys, xs = np.mgrid[rows, cols]
    px = xs.reshape(-1).astype(np.float64)
    py = ys.reshape(-1).astype(np.float64)
    P, K = len(px), len(ids)

    mean = batch.mean2d[ids]
    Q = batch.inv_cov2d[ids]
    dx = px[:, None] - mean[None, :, 0]
    dy = py[:, None] - mean[None, :, 1]
    power = -0.5 * (Q[:, 0, 0] * dx * dx + (Q[:, 0, 1] + Q[:, 1, 0]) * dx * dy + Q[:, 1, 1] * dy * dy)
    gauss = np.exp(power)
    raw = batch.peak_opacity[ids] * gauss

    if frozen is None:
        clamped = raw > ALPHA_MAX
        alpha = np.minimum(raw, ALPHA_MAX)
        alpha = np.where(alpha >= ALPHA_SKIP, alpha, 0.0)
        T = _transmittance_before(alpha)
        active = (alpha > 0.0) & (T >= TRANSMITTANCE_MIN)
        alpha = np.where(active, alpha, 0.0)
    else:
        clamped = frozen.clamped
        active = frozen.active
        alpha = np.where(active, np.where(clamped, ALPHA_MAX, raw), 0.0)
    T = _transmittance_before(alpha)

    weight = None
    blend = alpha * T
    if mode.weighted:
        if frozen is not None and freeze_weights and frozen.weight is not None:
            weight = frozen.weight
        else:
            weight = wabe_weight(T, mode.beta)
        blend = weight * blend

    color = np.einsum("pk,kc->pc", blend, batch.color[ids]) if K else np.zeros((P, 3))
    final_T = T[:, -1] * (1.0 - alpha[:, -1]) if K else np.ones(P)
    cache = TileCache(
        rows=rows, cols=cols, ids=ids, sources=batch.source_index[ids], px=px, py=py,
        gauss=gauss, alpha=alpha, active=active, clamped=clamped, transmittance=T, weight=weight,
    )
    return color, final_T, cache


def _transmittance_before(alpha: np.ndarray) -> np.ndarray:
    T = np.ones_like(alpha)
    if alpha.shape[1] > 1:
        T[:, 1:] = np.cumprod(1.0 - alpha[:, :-1], axis=1)
    return T


def map_tiles(fn: Callable, jobs: list, threads: int) -> list:
    """Run ``fn`` over tile jobs, preserving job order regardless of worker count."""
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def render(batch: SplatBatch, camera: Camera, mode: BlendMode, *, tile_size: int = TILE_SIZE,
           threads: int = 1, cache: bool = True, replay: Optional[RenderOutput] = None,
           freeze_weights: bool = False) -> RenderOutput:
    """Composite projected splats front to back onto a black background.

    Args:
        batch: Projected splats of this view
        camera: Camera providing the image size
        mode: Standard or weighted blending
        tile_size: Tile edge in pixels
        threads: Worker threads over tiles (output is independent of this)
        cache: Keep per-tile state for ``backward``
        replay: Reuse another render's ordering, tile membership and
            threshold decisions, recomputing only smooth quantities
        freeze_weights: With ``replay``, also reuse its WABE weights

    Returns:
        RenderOutput: Image, final transmittance and (optionally) caches
    """
    width, height = camera.width, camera.height
    if len(batch) and not np.all(np.isfinite(batch.depth)):
        raise ValueError("Splat depths must be finite")

    if replay is not None:
        if not replay.cached:
            raise ValueError("Replay render must have been produced with caching")
        jobs = [(rows, cols, ids, frozen) for (rows, cols, ids), frozen
                in zip(_replay_jobs(batch, replay), replay.tiles)]
        tile_size = replay.tile_size
    else:
        jobs = [(rows, cols, ids, None) for rows, cols, ids in _tile_jobs(batch, width, height, tile_size)]

    def run(rows, cols, ids, frozen):
        return _composite_tile(batch, mode, rows, cols, ids, frozen, freeze_weights)

    results = map_tiles(run, jobs, threads)

    image = np.zeros((height, width, 3))
    final_T = np.ones((height, width))
    tiles = []
    for (rows, cols, _, _), (color, T, tile) in zip(jobs, results):
        h, w = rows.stop - rows.start, cols.stop - cols.start
        image[rows, cols] = color.reshape(h, w, 3)
        final_T[rows, cols] = T.reshape(h, w)
        tiles.append(tile)

    if len(batch) == 0:
        logger.debug("Rendered an empty splat list")
    return RenderOutput(
        image=image, final_transmittance=final_T, batch=batch, mode=mode,
        tile_size=tile_size, tiles=tiles if cache else None,
    )


def render_reference(batch: SplatBatch, camera: Camera, mode: BlendMode) -> ImageBuffer:
    """Per-pixel list-based compositing over every splat; slow, used as an oracle."""
    splats = [batch[i] for i in depth_order(batch)]
    image = np.zeros((camera.height, camera.width, 3))
    for row in range(camera.height):
        for col in range(camera.width):
            T = 1.0
            acc = [0.0, 0.0, 0.0]
            for splat in splats:
                if T < TRANSMITTANCE_MIN:
                    break
                a = alpha_at(splat, (col, row))
                if a < ALPHA_SKIP:
                    continue
                w = math.exp(-mode.beta * (1.0 - T)) if mode.weighted else 1.0
                for c in range(3):
                    acc[c] += w * splat.color[c] * a * T
                T *= 1.0 - a
            image[row, col] = acc
    return image
