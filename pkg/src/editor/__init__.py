"""Editor oracle: style presets plus seeded frame jitter."""

from ..models import EditSpec
from .oracle import edit, jitter, noise_free_target, splitmix64
from .presets import PRESETS, StylePreset, UnknownPresetError, create_preset, preset_catalog

__all__ = [
    "EditSpec",
    "PRESETS",
    "StylePreset",
    "UnknownPresetError",
    "create_preset",
    "edit",
    "jitter",
    "noise_free_target",
    "preset_catalog",
    "splitmix64",
]
