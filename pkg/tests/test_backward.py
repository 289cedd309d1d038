"""Analytic gradients of compositing, projection and binding."""

import math

import numpy as np
import pytest
from conftest import batch_of, make_splat

from src.render.backward import (
    BackwardConfig,
    CacheMissingError,
    NonFiniteGradientError,
    WeightGradient,
    backward,
    backward_splats,
)
from src.render.projection import project_world
from src.render.rasterizer import BlendMode, render


def _one_hot(shape, row: int, col: int, channel=None) -> np.ndarray:
    g = np.zeros(shape)
    if channel is None:
        g[row, col] = 1.0
    else:
        g[row, col, channel] = 1.0
    return g


class TestColorGradients:
    def test_single_splat(self, small_camera):
        batch = batch_of([make_splat((3.0, 3.0), 1.0, 0.5, (0.2, 0.4, 0.6), 0)], small_camera)
        output = render(batch, small_camera, BlendMode.standard())
        grads = backward_splats(output, _one_hot(output.image.shape, 3, 3, channel=0))
        np.testing.assert_allclose(grads.color[0], [0.5, 0.0, 0.0], atol=1e-15)

    def test_occluded_layer_is_scaled_by_weight(self, stacked_pair, small_camera):
        g = _one_hot((8, 8, 3), 3, 3)
        standard = backward_splats(render(stacked_pair, small_camera, BlendMode.standard()), g)
        weighted = backward_splats(render(stacked_pair, small_camera, BlendMode.wabe(6.0)), g)
        np.testing.assert_allclose(standard.color[1], 0.32, atol=1e-12)
        np.testing.assert_allclose(weighted.color[1], math.exp(-3.6) * 0.32, atol=1e-12)
        assert weighted.color[1, 0] == pytest.approx(0.008743, abs=1e-6)
        np.testing.assert_allclose(weighted.color[0], standard.color[0], atol=1e-15)

    def test_weight_ratio_per_contribution(self, layered_scene):
        """Detached weighted color gradients equal w_k times the standard ones at every pixel."""
        camera = layered_scene.cameras[0]
        batch = project_world(layered_scene.world_at(0), camera)
        standard = render(batch, camera, BlendMode.standard())
        weighted = render(batch, camera, BlendMode.wabe(6.0))
        row_of = {int(s): i for i, s in enumerate(batch.source_index)}
        checked = 0
        for row, col in [(32, 32), (30, 20), (40, 44), (25, 38)]:
            records = weighted.contributions(row, col)
            g = _one_hot(standard.image.shape, row, col)
            gs = backward_splats(standard, g)
            gw = backward_splats(weighted, g)
            for record in records:
                i = row_of[record.source_index]
                np.testing.assert_allclose(gw.color[i], record.weight * gs.color[i], atol=1e-9)
                checked += 1
        assert checked > 0

    def test_early_stopped_layer_gets_zero(self, small_camera):
        front = [make_splat((3.0, 3.0), 1.0 + i, 1.0, (1, 0, 0), i) for i in range(5)]
        back = make_splat((3.0, 3.0), 10.0, 0.9, (0, 0, 1), 5)
        output = render(batch_of(front + [back], small_camera), small_camera, BlendMode.standard())
        grads = backward_splats(output, _one_hot(output.image.shape, 3, 3))
        assert np.all(grads.color[5] == 0.0)
        assert grads.opacity[5] == 0.0
        assert np.all(grads.mean2d[5] == 0.0)

    def test_skipped_splat_gets_zero(self, small_camera):
        faint = make_splat((3.0, 3.0), 1.0, 1e-3, (1, 1, 1), 0)
        visible = make_splat((5.0, 5.0), 2.0, 0.7, (1, 1, 1), 1)
        output = render(batch_of([faint, visible], small_camera), small_camera, BlendMode.standard())
        grads = backward_splats(output, np.ones(output.image.shape))
        assert np.all(grads.color[0] == 0.0) and grads.opacity[0] == 0.0
        assert np.any(grads.color[1] != 0.0)


class TestFullBackward:
    def test_culled_gaussians_get_zero(self, random5):
        gaussians = random5.gaussians.copy()
        gaussians.position[0] = [0.0, 0.0, -500.0]
        camera = random5.cameras[0]
        batch = project_world(random5.world_at(0, gaussians), camera)
        assert 0 not in batch.source_index
        output = render(batch, camera, BlendMode.standard())
        grads = backward(output, np.ones(output.image.shape))
        for value in grads.as_dict().values():
            assert np.all(value[0] == 0.0)
        assert np.any(grads.color[1:] != 0.0)

    def test_deterministic(self, layered_scene):
        camera = layered_scene.cameras[0]
        batch = project_world(layered_scene.world_at(0), camera)
        output = render(batch, camera, BlendMode.wabe(6.0))
        g = np.random.default_rng(0).normal(size=output.image.shape)
        first = backward(output, g, BlendMode.wabe(6.0))
        for threads in (1, 4):
            again = backward(output, g, config=BackwardConfig(threads=threads))
            for name, value in first.as_dict().items():
                np.testing.assert_array_equal(value, again.as_dict()[name])

    def test_full_policy_differs_under_weighting(self, layered_scene):
        camera = layered_scene.cameras[0]
        batch = project_world(layered_scene.world_at(0), camera)
        output = render(batch, camera, BlendMode.wabe(6.0))
        g = np.ones(output.image.shape)
        detached = backward(output, g)
        full = backward(output, g, config=BackwardConfig(wabe_weight_gradient=WeightGradient.FULL))
        np.testing.assert_array_equal(detached.color, full.color)
        assert not np.allclose(detached.opacity_logit, full.opacity_logit)


class TestContract:
    def test_missing_cache(self, stacked_pair, small_camera):
        output = render(stacked_pair, small_camera, BlendMode.standard(), cache=False)
        with pytest.raises(CacheMissingError):
            backward_splats(output, np.zeros(output.image.shape))

    def test_non_finite_gradient_names_pixel(self, stacked_pair, small_camera):
        output = render(stacked_pair, small_camera, BlendMode.standard())
        g = np.zeros(output.image.shape)
        g[5, 2, 1] = np.nan
        with pytest.raises(NonFiniteGradientError) as info:
            backward_splats(output, g)
        assert (info.value.row, info.value.col) == (5, 2)

    def test_mode_mismatch(self, layered_scene):
        output = layered_scene.render_view(0, 0, BlendMode.standard(), cache=True)
        with pytest.raises(ValueError, match="mode"):
            backward(output, np.zeros(output.image.shape), BlendMode.wabe(6.0))

    def test_shape_mismatch(self, stacked_pair, small_camera):
        output = render(stacked_pair, small_camera, BlendMode.standard())
        with pytest.raises(ValueError, match="shape"):
            backward_splats(output, np.zeros((4, 4, 3)))
