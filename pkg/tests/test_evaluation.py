import numpy as np
import pytest

from src.evaluation import GridMismatchError, evaluate, mean_temporal_delta
from src.fixtures import flap_scene
from src.render.rasterizer import BlendMode


@pytest.fixture(scope="module")
def flap():
    return flap_scene(0).with_timeline(flap_scene(0).timeline[2:5])


def test_self_comparison(flap):
    report = evaluate(flap, flap.render_grid())
    assert report.psnr == 99.0
    assert report.ssim == pytest.approx(1.0, abs=1e-9)
    assert report.flicker_excess == pytest.approx(0.0, abs=1e-15)
    assert [m.view for m in report.views] == [0, 1]


def test_weighted_renders_score_lower(flap):
    report = evaluate(flap, flap.render_grid(BlendMode.wabe(6.0)))
    assert report.psnr < 99.0


def test_missing_view(flap):
    with pytest.raises(GridMismatchError):
        evaluate(flap, flap.render_grid()[:1])


def test_missing_frame(flap):
    grid = flap.render_grid()
    grid[1] = grid[1][:-1]
    with pytest.raises(GridMismatchError, match="View 1"):
        evaluate(flap, grid)


def test_wrong_resolution(flap):
    grid = flap.render_grid()
    grid[0][0] = np.zeros((8, 8, 3))
    with pytest.raises(GridMismatchError):
        evaluate(flap, grid)


def test_mean_temporal_delta():
    frames = [np.full((4, 4, 3), v) for v in (0.0, 0.5, 1.0)]
    assert mean_temporal_delta(frames) == pytest.approx(0.5)
    assert mean_temporal_delta(frames[:1]) == 0.0


def test_flicker_excess_sign(flap):
    """A reference that flickers more than the render gives a negative excess."""
    grid = flap.render_grid()
    noisy = [[np.clip(img + (0.2 if s % 2 else -0.2), 0, 1) for s, img in enumerate(row)] for row in grid]
    assert evaluate(flap, noisy).flicker_excess < 0.0
