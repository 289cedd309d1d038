"""Shared builders for hand-made splats, cameras and scenes."""

import numpy as np
import pytest

from src.core import Camera
from src.fixtures import random_scene, two_layer_scene
from src.render.projection import Splat2D, SplatBatch


def pinhole(width: int = 64, height: int = 64, focal: float = 100.0, cx: float = 32.0, cy: float = 32.0) -> Camera:
    """Camera at the origin looking down +z."""
    return Camera(fx=focal, fy=focal, cx=cx, cy=cy, rotation=np.eye(3), translation=np.zeros(3),
                  width=width, height=height)


def make_splat(mean, depth: float, opacity: float, color, index: int, variance: float = 0.25) -> Splat2D:
    cov = variance * np.eye(2)
    return Splat2D(mean2d=np.asarray(mean, dtype=np.float64), cov2d=cov, inv_cov2d=np.linalg.inv(cov),
                   depth=depth, peak_opacity=opacity, color=np.asarray(color, dtype=np.float64),
                   source_index=index)


def batch_of(splats, camera: Camera) -> SplatBatch:
    return SplatBatch.from_splats(splats, camera)


@pytest.fixture
def small_camera() -> Camera:
    return pinhole(width=8, height=8, focal=10.0, cx=4.0, cy=4.0)


@pytest.fixture
def stacked_pair(small_camera):
    """Front (alpha 0.6, red) and back (alpha 0.8, blue) splats centred on pixel (row 3, col 3)."""
    front = make_splat((3.0, 3.0), 1.0, 0.6, (1.0, 0.0, 0.0), 0)
    back = make_splat((3.0, 3.0), 2.0, 0.8, (0.0, 0.0, 1.0), 1)
    return batch_of([front, back], small_camera)


@pytest.fixture
def layered_scene():
    return two_layer_scene(seed=0)


@pytest.fixture
def random5():
    return random_scene(seed=0, count=5)
