"""Tiled compositing under standard and weighted blending."""

import math

import numpy as np
import pytest
from conftest import batch_of, make_splat

from src.fixtures import random_scene
from src.render.projection import project_world
from src.render.rasterizer import (
    ALPHA_MAX,
    BlendMode,
    alpha_at,
    depth_order,
    render,
    render_reference,
    wabe_weight,
    wabe_weight_calls,
)


class TestAlphaAt:
    def test_at_mean(self):
        splat = make_splat((3.0, 3.0), 1.0, 0.8, (1, 1, 1), 0)
        assert alpha_at(splat, (3.0, 3.0)) == pytest.approx(0.8)

    def test_mahalanobis_root_two(self):
        splat = make_splat((3.0, 3.0), 1.0, 0.99, (1, 1, 1), 0, variance=1.0)
        assert alpha_at(splat, (4.0, 4.0)) == pytest.approx(0.99 * math.exp(-1.0), abs=1e-12)
        assert alpha_at(splat, (4.0, 4.0)) == pytest.approx(0.3642, abs=5e-5)

    def test_clamped(self):
        splat = make_splat((3.0, 3.0), 1.0, 1.0, (1, 1, 1), 0)
        assert alpha_at(splat, (3.0, 3.0)) == ALPHA_MAX


class TestWabeWeight:
    def test_fully_visible(self):
        assert wabe_weight(1.0, 6.0) == 1.0

    def test_fully_occluded(self):
        assert abs(wabe_weight(0.0, 6.0) - math.exp(-6.0)) < 1e-12
        assert wabe_weight(0.0, 6.0) == pytest.approx(2.4788e-3, abs=1e-7)

    def test_partial(self):
        assert wabe_weight(0.4, 6.0) == pytest.approx(2.7324e-2, abs=1e-6)

    def test_zero_beta(self):
        np.testing.assert_array_equal(wabe_weight(np.linspace(0, 1, 11), 0.0), 1.0)

    def test_monotone_in_transmittance(self):
        w = wabe_weight(np.linspace(0, 1, 101), 6.0)
        assert np.all(np.diff(w) >= 0) and np.all((w > 0) & (w <= 1))

    def test_negative_beta_rejected(self):
        with pytest.raises(ValueError):
            wabe_weight(0.5, -1.0)
        with pytest.raises(ValueError):
            BlendMode.wabe(-0.1)


class TestRenderExamples:
    def test_single_saturated_splat(self, small_camera):
        batch = batch_of([make_splat((3.0, 3.0), 1.0, 1.0, (1, 1, 1), 0)], small_camera)
        image = render(batch, small_camera, BlendMode.standard()).image
        np.testing.assert_allclose(image[3, 3], [0.99, 0.99, 0.99])

    def test_two_layers_standard(self, stacked_pair, small_camera):
        image = render(stacked_pair, small_camera, BlendMode.standard()).image
        np.testing.assert_allclose(image[3, 3], [0.6, 0.0, 0.32], atol=1e-12)

    def test_two_layers_weighted(self, stacked_pair, small_camera):
        image = render(stacked_pair, small_camera, BlendMode.wabe(6.0)).image
        np.testing.assert_allclose(image[3, 3], [0.6, 0.0, math.exp(-3.6) * 0.32], atol=1e-12)
        assert image[3, 3, 2] == pytest.approx(0.0087, abs=1e-4)

    def test_empty_is_black(self, small_camera):
        output = render(batch_of([], small_camera), small_camera, BlendMode.wabe())
        np.testing.assert_array_equal(output.image, 0.0)
        np.testing.assert_array_equal(output.final_transmittance, 1.0)

    def test_contribution_records(self, stacked_pair, small_camera):
        records = render(stacked_pair, small_camera, BlendMode.wabe(6.0)).contributions(3, 3)
        assert [r.source_index for r in records] == [0, 1]
        assert records[1].transmittance == pytest.approx(0.4)
        assert records[1].weight == pytest.approx(math.exp(-3.6))

    def test_early_stop(self, small_camera):
        front = [make_splat((3.0, 3.0), 1.0 + i, 1.0, (1, 0, 0), i) for i in range(5)]
        back = make_splat((3.0, 3.0), 10.0, 0.9, (0, 0, 1), 5)
        output = render(batch_of(front + [back], small_camera), small_camera, BlendMode.standard())
        sources = [r.source_index for r in output.contributions(3, 3)]
        assert sources[:2] == [0, 1]
        assert 5 not in sources
        assert output.image[3, 3, 2] == 0.0


class TestOrdering:
    def test_ties_break_by_source_index(self, small_camera):
        a = make_splat((3.0, 3.0), 2.0, 0.5, (1, 0, 0), 7)
        b = make_splat((3.0, 3.0), 2.0, 0.5, (0, 1, 0), 3)
        batch = batch_of([a, b], small_camera)
        np.testing.assert_array_equal(batch.source_index[depth_order(batch)], [3, 7])
        image = render(batch, small_camera, BlendMode.standard()).image
        np.testing.assert_allclose(image[3, 3], [0.25, 0.5, 0.0], atol=1e-12)

    def test_thread_count_does_not_change_output(self, layered_scene):
        camera = layered_scene.cameras[0]
        batch = project_world(layered_scene.world_at(0), camera)
        for mode in (BlendMode.standard(), BlendMode.wabe(6.0)):
            one = render(batch, camera, mode, threads=1)
            for threads in (4, 8):
                other = render(batch, camera, mode, threads=threads)
                np.testing.assert_array_equal(one.image, other.image)
                np.testing.assert_array_equal(one.final_transmittance, other.final_transmittance)

    @pytest.mark.parametrize("tile_size", [4, 7, 16, 64])
    def test_tile_size_does_not_change_output(self, layered_scene, tile_size):
        camera = layered_scene.cameras[0]
        batch = project_world(layered_scene.world_at(0), camera)
        reference = render(batch, camera, BlendMode.wabe(6.0), tile_size=16).image
        np.testing.assert_allclose(render(batch, camera, BlendMode.wabe(6.0), tile_size=tile_size).image,
                                   reference, atol=1e-12)


class TestBlendingProperties:
    def test_zero_beta_is_standard(self, layered_scene):
        camera = layered_scene.cameras[0]
        batch = project_world(layered_scene.world_at(0), camera)
        np.testing.assert_array_equal(render(batch, camera, BlendMode.wabe(0.0)).image,
                                      render(batch, camera, BlendMode.standard()).image)

    def test_standard_bounded_by_brightest_color(self, layered_scene):
        camera = layered_scene.cameras[0]
        batch = project_world(layered_scene.world_at(0), camera)
        image = render(batch, camera, BlendMode.standard()).image
        assert image.max() <= batch.color.max() + 1e-12

    def test_weighted_never_brighter(self, layered_scene):
        camera = layered_scene.cameras[0]
        batch = project_world(layered_scene.world_at(0), camera)
        standard = render(batch, camera, BlendMode.standard()).image
        weighted = render(batch, camera, BlendMode.wabe(6.0)).image
        assert np.all(weighted <= standard + 1e-9)
        assert np.any(weighted < standard - 1e-3)

    def test_standard_never_evaluates_weights(self, layered_scene):
        before = wabe_weight_calls.count
        layered_scene.render_view(0, 0, BlendMode.standard())
        assert wabe_weight_calls.count == before
        layered_scene.render_view(0, 0, BlendMode.wabe(6.0))
        assert wabe_weight_calls.count > before


def _oracle_gap(seed: int) -> float:
    rng = np.random.default_rng(seed)
    scene = random_scene(seed, count=int(rng.integers(1, 51)), size=24)
    camera = scene.cameras[0]
    batch = project_world(scene.world_at(0), camera)
    gap = 0.0
    for mode in (BlendMode.standard(), BlendMode.wabe(6.0)):
        tiled = render(batch, camera, mode, tile_size=8).image
        gap = max(gap, float(np.abs(tiled - render_reference(batch, camera, mode)).max()))
    return gap


class TestReferenceOracle:
    @pytest.mark.parametrize("seed", range(5))
    def test_tiled_matches_brute_force(self, seed):
        assert _oracle_gap(seed) < 1e-6

    @pytest.mark.slow
    def test_tiled_matches_brute_force_on_many_scenes(self):
        assert max(_oracle_gap(seed) for seed in range(100)) < 1e-6
