import numpy as np
import pytest

from src.fixtures import (
    BACK_TRIANGLES,
    FLAP_TRIANGLES,
    OCCLUDED_STEPS,
    VISIBLE_STEPS,
    fit_scenes,
    flap_edit_config,
    flap_jitter_config,
    flap_scene,
    make_fixtures,
    random_scene,
    two_layer_scene,
)
from src.storage.manager import load_run_config, load_scene, resolve_scene_path


def _without(scene, triangles):
    """Same scene with the Gaussians on ``triangles`` made invisible."""
    gaussians = scene.gaussians.copy()
    gaussians.opacity_logit[np.isin(gaussians.parent_triangle, triangles)] = -30.0
    return scene.with_gaussians(gaussians)


def test_two_layer_front_is_red():
    scene = two_layer_scene(0)
    image = scene.render_view(0, 0).image
    # front card is centered left of the back card
    row = image.shape[0] // 2
    assert image[row, 20, 0] > image[row, 20, 2]
    assert image[row, 46, 2] > image[row, 46, 0]


def test_flap_hides_back_card_when_closed():
    scene = flap_scene(0)
    hidden = _without(scene, BACK_TRIANGLES)
    gap = {s: np.abs(scene.render_view(0, s).image - hidden.render_view(0, s).image).mean()
           for s in OCCLUDED_STEPS + VISIBLE_STEPS}
    assert max(gap[s] for s in OCCLUDED_STEPS) < 0.25 * min(gap[s] for s in VISIBLE_STEPS)


def test_flap_layout():
    scene = flap_scene(0)
    assert scene.num_views == 2 and scene.num_steps == 8
    parents = set(scene.gaussians.parent_triangle.tolist())
    assert parents == set(BACK_TRIANGLES) | set(FLAP_TRIANGLES)
    assert OCCLUDED_STEPS[0] == 0 and VISIBLE_STEPS


def test_fit_pair_shares_geometry():
    init, target = fit_scenes(0)
    assert len(init.gaussians) == len(target.gaussians) == 200
    assert init.num_views == 4
    np.testing.assert_array_equal(init.gaussians.parent_triangle, target.gaussians.parent_triangle)
    np.testing.assert_allclose(init.gaussians.color, 0.5)


@pytest.mark.parametrize("builder", [two_layer_scene, flap_scene, lambda s: random_scene(s, 5)])
def test_seeded(builder):
    a, b = builder(3), builder(3)
    for name, value in a.gaussians.parameters().items():
        np.testing.assert_array_equal(value, b.gaussians.parameters()[name])


def test_make_fixtures(tmp_path):
    written = make_fixtures(tmp_path)
    assert set(written) == {"two_layer", "random5", "fit_init", "fit_target", "flap", "flap_edit", "flap_jitter"}
    for name in ("two_layer", "random5", "fit_init", "fit_target", "flap"):
        assert len(load_scene(written[name]).gaussians) > 0
    run = load_run_config(written["flap_edit"])
    assert run.train == flap_edit_config()
    assert resolve_scene_path(run, written["flap_edit"]) == written["flap"]
    assert load_run_config(written["flap_jitter"]).train == flap_jitter_config()
