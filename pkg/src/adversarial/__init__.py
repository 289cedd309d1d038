"""Patch discriminator and temporal-consistency adversarial losses."""

from .discriminator import Discriminator, DiscriminatorFormatError
from .pairs import PairLabel, PairSample, d_loss, g_loss, make_pairs

__all__ = [
    "Discriminator",
    "DiscriminatorFormatError",
    "PairLabel",
    "PairSample",
    "d_loss",
    "g_loss",
    "make_pairs",
]
