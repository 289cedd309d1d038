"""Finite-difference verification of the full backward chain."""

import numpy as np
import pytest

from src.fixtures import random_scene
from src.render.backward import BackwardConfig, WeightGradient
from src.render.gradcheck import (
    GRADCHECK_TOLERANCE,
    QUATERNION_STEP,
    analytic_gradients,
    gradcheck,
    numeric_gradients,
    relative_error,
    richardson,
    squared_error,
)
from src.render.rasterizer import BlendMode

CONFIGURATIONS = [
    (BlendMode.standard(), WeightGradient.DETACHED),
    (BlendMode.wabe(6.0), WeightGradient.DETACHED),
    (BlendMode.wabe(6.0), WeightGradient.FULL),
]


def _check(seed: int, mode: BlendMode, policy: WeightGradient):
    scene = random_scene(seed, count=5)
    camera = scene.cameras[0]
    target = np.random.default_rng(seed + 1000).uniform(size=(camera.height, camera.width, 3))
    return gradcheck(scene.gaussians, scene.frames_at(0), camera, mode, squared_error(target),
                     BackwardConfig(wabe_weight_gradient=policy))


class TestRelativeError:
    def test_floor_avoids_division_by_zero(self):
        np.testing.assert_array_equal(relative_error(np.zeros(3), np.zeros(3)), 0.0)

    def test_symmetric(self):
        assert relative_error(np.array([1.0]), np.array([1.1]))[0] == pytest.approx(0.1 / 1.1)


class TestRichardson:
    def test_cancels_second_order_error(self):
        # central differences of x^3 at x=2 carry exactly h^2 of error
        def central(h):
            return ((2.0 + h) ** 3 - (2.0 - h) ** 3) / (2.0 * h)

        h = QUATERNION_STEP
        assert central(h) - 12.0 == pytest.approx(h * h, abs=1e-10)
        assert richardson(central(h), central(0.5 * h)) == pytest.approx(12.0, abs=1e-9)

    def test_rotation_differences_reach_tolerance(self):
        scene = random_scene(0, count=5)
        camera = scene.cameras[0]
        loss = squared_error(np.random.default_rng(1000).uniform(size=(camera.height, camera.width, 3)))
        mode = BlendMode.standard()
        _, analytic, base = analytic_gradients(scene.gaussians, scene.frames_at(0), camera, mode, loss)
        numeric = numeric_gradients(scene.gaussians, scene.frames_at(0), camera, mode, loss, base,
                                    freeze_weights=False)
        assert relative_error(analytic.rotation, numeric.rotation).max() < GRADCHECK_TOLERANCE


class TestGradcheck:
    @pytest.mark.parametrize("mode,policy", CONFIGURATIONS, ids=["standard", "wabe-detached", "wabe-full"])
    @pytest.mark.parametrize("seed", [0, 1])
    def test_every_parameter_class_matches(self, seed, mode, policy):
        report = _check(seed, mode, policy)
        assert set(report.max_rel_error) == {"position", "rotation", "log_scale", "opacity_logit", "color"}
        assert report.passed, report.max_rel_error
        assert report.tolerance == GRADCHECK_TOLERANCE

    def test_policy_is_recorded(self):
        assert _check(0, BlendMode.standard(), WeightGradient.DETACHED).policy == "n/a"
        assert _check(0, BlendMode.wabe(6.0), WeightGradient.FULL).policy == "full"

    def test_wrong_policy_is_detected(self):
        """Detached analytic gradients disagree with plain differences of the weighted forward."""
        scene = random_scene(3, count=5)
        camera = scene.cameras[0]
        target = np.zeros((camera.height, camera.width, 3))
        mode = BlendMode.wabe(6.0)
        _, analytic, base = analytic_gradients(scene.gaussians, scene.frames_at(0), camera, mode,
                                               squared_error(target))
        numeric = numeric_gradients(scene.gaussians, scene.frames_at(0), camera, mode, squared_error(target),
                                    base, freeze_weights=False)
        assert relative_error(analytic.opacity_logit, numeric.opacity_logit).max() > GRADCHECK_TOLERANCE

    @pytest.mark.slow
    @pytest.mark.parametrize("mode,policy", CONFIGURATIONS, ids=["standard", "wabe-detached", "wabe-full"])
    def test_twenty_seeded_scenes(self, mode, policy):
        failures = {seed: r.max_rel_error for seed in range(20) if not (r := _check(seed, mode, policy)).passed}
        assert not failures
