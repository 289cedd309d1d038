"""Finite-difference verification of the analytic backward pass.

Differences are taken on a replay of the base render, so the depth order,
tile membership and the skip/early-stop/clamp decisions stay fixed and the
differenced function is smooth in every parameter.
"""

import logging
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from ..avatar.rig import FrameSet, bind_to_world
from ..core import Camera, GaussianSet, GradBuffer, ImageBuffer
from ..models import GradcheckReport
from .backward import BackwardConfig, WeightGradient, backward
from .projection import project_world
from .rasterizer import BlendMode, RenderOutput, render

logger = logging.getLogger(__name__)

ImageLoss = Callable[[ImageBuffer], Tuple[float, ImageBuffer]]

STEP = 1e-5
QUATERNION_STEP = 1e-3
GRADCHECK_TOLERANCE = 1e-4
RELATIVE_FLOOR = 1e-8


def squared_error(target: ImageBuffer) -> ImageLoss:
    """``0.5 * sum((C - target)^2)`` and its pixel gradient."""
    target = np.asarray(target, dtype=np.float64)

    def loss(image: ImageBuffer):
        diff = image - target
        return 0.5 * float(np.sum(diff * diff)), diff

    return loss


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    a = np.abs(analytic)
    f = np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(a, f), RELATIVE_FLOOR)


def _forward(gaussians: GaussianSet, frames: FrameSet, camera: Camera, mode: BlendMode, *,
             replay: Optional[RenderOutput] = None, freeze_weights: bool = False) -> RenderOutput:
    batch = project_world(bind_to_world(gaussians, frames), camera)
    return render(batch, camera, mode, replay=replay, freeze_weights=freeze_weights, cache=replay is None)


def analytic_gradients(gaussians: GaussianSet, frames: FrameSet, camera: Camera, mode: BlendMode,
                       loss: ImageLoss, config: BackwardConfig = BackwardConfig()):
    """Loss value, GradBuffer and the cached render it was computed from."""
    output = _forward(gaussians, frames, camera, mode)
    value, grad_pixels = loss(output.image)
    return value, backward(output, grad_pixels, mode, config), output


def numeric_gradients(gaussians: GaussianSet, frames: FrameSet, camera: Camera, mode: BlendMode,
                      loss: ImageLoss, base: RenderOutput, freeze_weights: bool) -> GradBuffer:
    """Central differences of ``loss`` for every parameter entry."""
    numeric = GradBuffer.zeros(len(gaussians))

    def evaluate(shifted: GaussianSet) -> float:
        out = _forward(shifted, frames, camera, mode, replay=base, freeze_weights=freeze_weights)
        return loss(out.image)[0]

    def central(name: str, index: Tuple[int, ...], step: float) -> float:
        values = []
        for sign in (1.0, -1.0):
            shifted = gaussians.copy()
            getattr(shifted, name)[index] += sign * step
            if name == "rotation":
                row = index[0]
                shifted.rotation[row] /= np.linalg.norm(shifted.rotation[row])
            values.append(evaluate(shifted))
        return (values[0] - values[1]) / (2.0 * step)

    for name in GradBuffer.fields:
        target = getattr(numeric, name)
        for index in np.ndindex(getattr(gaussians, name).shape):
            if name == "rotation":
                target[index] = richardson(central(name, index, QUATERNION_STEP),
                                           central(name, index, 0.5 * QUATERNION_STEP))
            else:
                target[index] = central(name, index, STEP)
    return numeric


def richardson(coarse: float, fine: float) -> float:
    """Cancel the h² term of two central differences taken at h and h/2."""
    return (4.0 * fine - coarse) / 3.0


def gradcheck(gaussians: GaussianSet, frames: FrameSet, camera: Camera, mode: BlendMode,
              loss: ImageLoss, config: BackwardConfig = BackwardConfig()) -> GradcheckReport:
    """Compare analytic and finite-difference gradients per parameter class.

    Args:
        gaussians: Scene to differentiate (unit quaternions)
        frames: Binding frames of the posed rig
        camera: View to render
        mode: Blend mode of the forward
        loss: Scalar image functional returning (value, dL/dC)
        config: Weight-gradient policy; under Detached the differenced forward
            reuses the base render's WABE weights

    Returns:
        GradcheckReport: Max relative error and its flat index per class
    """
    _, analytic, base = analytic_gradients(gaussians, frames, camera, mode, loss, config)
    freeze = mode.weighted and config.wabe_weight_gradient == WeightGradient.DETACHED
    numeric = numeric_gradients(gaussians, frames, camera, mode, loss, base, freeze)

    errors: Dict[str, float] = {}
    worst: Dict[str, int] = {}
    for name in GradBuffer.fields:
        rel = relative_error(getattr(analytic, name), getattr(numeric, name)).reshape(-1)
        if rel.size == 0:
            errors[name] = 0.0
            continue
        worst[name] = int(np.argmax(rel))
        errors[name] = float(rel[worst[name]])

    report = GradcheckReport(
        mode=str(mode),
        policy=config.wabe_weight_gradient.value if mode.weighted else "n/a",
        max_rel_error=errors,
        worst_index=worst,
        tolerance=GRADCHECK_TOLERANCE,
    )
    logger.debug("gradcheck %s/%s: %s", report.mode, report.policy, errors)
    return report
