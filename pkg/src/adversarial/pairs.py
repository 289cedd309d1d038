"""Temporal difference pairs and the conditional adversarial losses."""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Tuple

import numpy as np

from ..core import ImageBuffer, sigmoid
from ..losses.image import DimensionMismatchError
from .discriminator import Discriminator

DIFFERENCE_OFFSET = 0.5


class PairLabel(str, Enum):
    REAL = "real"
    FAKE = "fake"


@dataclass(frozen=True)
class PairSample:
    """An anchor frame and its signed difference to the adjacent edited frame."""

    anchor: ImageBuffer
    difference: ImageBuffer
    label: PairLabel

    def __post_init__(self):
        if np.shape(self.anchor) != np.shape(self.difference):
            raise DimensionMismatchError(np.shape(self.anchor), np.shape(self.difference), "pair channels")

    def as_input(self) -> np.ndarray:
        """Channels-first 6-channel array; difference channels carry a +0.5 offset."""
        stacked = np.concatenate([self.anchor, self.difference + DIFFERENCE_OFFSET], axis=2)
        return np.ascontiguousarray(np.transpose(stacked, (2, 0, 1)))


def make_pairs(edited_t: ImageBuffer, edited_k: ImageBuffer,
               rendered_t: ImageBuffer) -> Tuple[PairSample, PairSample]:
    """Real pair ``(E_t, E_t - E_k)`` and fake pair ``(C_t, C_t - E_k)``."""
    edited_t = np.asarray(edited_t, dtype=np.float64)
    edited_k = np.asarray(edited_k, dtype=np.float64)
    rendered_t = np.asarray(rendered_t, dtype=np.float64)
    for other in (edited_k, rendered_t):
        if other.shape != edited_t.shape:
            raise DimensionMismatchError(edited_t.shape, other.shape)
    real = PairSample(edited_t, edited_t - edited_k, PairLabel.REAL)
    fake = PairSample(rendered_t, rendered_t - edited_k, PairLabel.FAKE)
    return real, fake


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def d_loss(disc: Discriminator, real: PairSample, fake: PairSample) -> Tuple[float, Dict[str, np.ndarray]]:
    """Discriminator loss ``mean(-log D(real)) + mean(-log(1 - D(fake)))``.

    The fake pair is a constant here; only discriminator gradients are returned.
    """
    z_real, cache_real = disc.forward(real.as_input())
    z_fake, cache_fake = disc.forward(fake.as_input())
    value = float(np.mean(_softplus(-z_real)) + np.mean(_softplus(z_fake)))

    _, grads = disc.backward(cache_real, -sigmoid(-z_real) / z_real.size)
    _, grads_fake = disc.backward(cache_fake, sigmoid(z_fake) / z_fake.size)
    for name, g in grads_fake.items():
        grads[name] = grads[name] + g
    return value, grads


def g_loss(disc: Discriminator, fake: PairSample) -> Tuple[float, np.ndarray]:
    """Generator loss ``mean(-log D(fake))`` and its gradient on the rendered image.

    The rendered frame enters both channel groups, so its gradient is the sum
    of the anchor and difference input gradients.
    """
    z_fake, cache = disc.forward(fake.as_input())
    value = float(np.mean(_softplus(-z_fake)))
    d_input, _ = disc.backward(cache, -sigmoid(-z_fake) / z_fake.size)
    d_pixels = d_input[0:3] + d_input[3:6]
    return value, np.transpose(d_pixels, (1, 2, 0))
