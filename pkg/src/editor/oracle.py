"""Deterministic editor oracle with seeded per-frame inconsistency.

Jitter is drawn from a splitmix64 hash of (seed, view, time) rather than a
stateful generator, so re-editing a frame always reproduces its jitter.
"""

import logging
from typing import Tuple

import numpy as np

from ..core import ImageBuffer, check_image
from ..models import EditSpec
from .presets import create_preset

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _unit(h: int) -> float:
    return (h >> 11) / float(1 << 53)


def jitter(seed: int, view: int, time: int, sigma: float) -> Tuple[float, float]:
    """Gain in ``1 +- sigma`` and bias in ``+- sigma/2`` for one frame."""
    h = splitmix64(seed & MASK64)
    h = splitmix64(h ^ (view & MASK64))
    h = splitmix64(h ^ (time & MASK64))
    u1 = _unit(splitmix64(h))
    u2 = _unit(splitmix64(h ^ 0x5851F42D4C957F2D))
    return 1.0 + sigma * (2.0 * u1 - 1.0), 0.5 * sigma * (2.0 * u2 - 1.0)


def _clamp(image: np.ndarray) -> np.ndarray:
    out = np.clip(image, 0.0, 1.0)
    if logger.isEnabledFor(logging.DEBUG):
        clipped = int(np.count_nonzero(out != image))
        if clipped:
            logger.debug("Editor clamped %d values", clipped)
    return out


def edit(image: ImageBuffer, spec: EditSpec, view: int, time: int) -> ImageBuffer:
    """Edited frame ``E`` for a rendered frame ``C`` of (view, time).

    Raises:
        UnknownPresetError: If ``spec.prompt_id`` is not in the catalog
    """
    image = check_image(image)
    out = _clamp(create_preset(spec.prompt_id).apply(image))
    if spec.jitter_sigma > 0.0:
        gain, bias = jitter(spec.seed, view, time, spec.jitter_sigma)
        out = _clamp(out * gain + bias)
    return out


def noise_free_target(image: ImageBuffer, spec: EditSpec) -> ImageBuffer:
    """The preset alone, with jitter forced to zero."""
    return edit(image, spec.model_copy(update={"jitter_sigma": 0.0}), view=0, time=0)
