"""Binding regularizer keeping Gaussians close to their parent triangles."""

from typing import Tuple

import numpy as np

from ..core import GaussianSet, GradBuffer

POSITION_THRESHOLD = 1.0  # triangle-frame units
SCALE_THRESHOLD = 0.6


def const_loss(gaussians: GaussianSet, position_threshold: float = POSITION_THRESHOLD,
               scale_threshold: float = SCALE_THRESHOLD) -> Tuple[float, GradBuffer]:
    """Squared hinge on local offsets and scales, averaged over Gaussians.

    Returns:
        Tuple[float, GradBuffer]: Loss value and gradients (position and
        log_scale rows only; other fields are zero)
    """
    n = len(gaussians)
    grads = GradBuffer.zeros(n)
    if n == 0:
        return 0.0, grads

    p = gaussians.position
    excess_p = np.maximum(0.0, np.abs(p) - position_threshold)
    s = np.exp(gaussians.log_scale)
    excess_s = np.maximum(0.0, s - scale_threshold)

    value = float(np.sum(excess_p * excess_p) / n + np.sum(excess_s * excess_s) / n)
    grads.position[:] = 2.0 * excess_p * np.sign(p) / n
    grads.log_scale[:] = 2.0 * excess_s * s / n
    return value, grads
