"""Global color-transform presets standing in for a text-driven image editor."""

from abc import ABC, abstractmethod
from typing import Dict, Type

import numpy as np

from ..core import ImageBuffer

LUMA = np.array([0.299, 0.587, 0.114])


class UnknownPresetError(ValueError):
    """Raised when a prompt id has no registered preset."""

    def __init__(self, prompt_id: int):
        super().__init__(f"Unknown editor preset {prompt_id}; available: {sorted(PRESETS)}")
        self.prompt_id = prompt_id


class StylePreset(ABC):
    """A pure function of pixel value and pixel coordinate."""

    prompt_id: int
    name: str
    description: str

    @abstractmethod
    def apply(self, image: ImageBuffer) -> ImageBuffer:
        """Transform an ``(H, W, 3)`` image; the caller clamps the result.

        Args:
            image: Input frame

        Returns:
            ImageBuffer: New array, input untouched
        """
        pass


class IdentityPreset(StylePreset):
    prompt_id = 0
    name = "identity"
    description = "output equals input"

    def apply(self, image: ImageBuffer) -> ImageBuffer:
        return image.copy()


class HueContrastPreset(StylePreset):
    prompt_id = 1
    name = "hue-contrast"
    description = "hue rotation by 60 degrees about the gray axis, then contrast 1.2 about 0.5"

    def __init__(self, degrees: float = 60.0, contrast: float = 1.2):
        theta = np.deg2rad(degrees)
        u = np.ones(3) / np.sqrt(3.0)
        cross = np.array([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])
        self.matrix = np.cos(theta) * np.eye(3) + np.sin(theta) * cross + (1.0 - np.cos(theta)) * np.outer(u, u)
        self.contrast = contrast

    def apply(self, image: ImageBuffer) -> ImageBuffer:
        rotated = np.einsum("ij,hwj->hwi", self.matrix, image)
        return (rotated - 0.5) * self.contrast + 0.5


class BronzePreset(StylePreset):
    prompt_id = 2
    name = "bronze"
    description = "warm channel mix"

    matrix = np.array([
        [0.60, 0.50, 0.20],
        [0.45, 0.40, 0.15],
        [0.25, 0.20, 0.10],
    ])

    def apply(self, image: ImageBuffer) -> ImageBuffer:
        return np.einsum("ij,hwj->hwi", self.matrix, image)


class BrightnessRampPreset(StylePreset):
    prompt_id = 3
    name = "brightness-ramp"
    description = "gain rising from 0.7 at the top row to 1.3 at the bottom row"

    def apply(self, image: ImageBuffer) -> ImageBuffer:
        height = image.shape[0]
        y = np.arange(height, dtype=np.float64) / max(height - 1, 1)
        return image * (0.7 + 0.6 * y)[:, None, None]


class CrimsonPreset(StylePreset):
    prompt_id = 4
    name = "crimson"
    description = "recolor everything red, keeping luminance shading"

    def apply(self, image: ImageBuffer) -> ImageBuffer:
        lum = np.einsum("hwc,c->hw", image, LUMA)
        return np.stack([0.3 + 0.7 * lum, 0.2 * lum, 0.2 * lum], axis=2)


PRESETS: Dict[int, Type[StylePreset]] = {
    cls.prompt_id: cls
    for cls in (IdentityPreset, HueContrastPreset, BronzePreset, BrightnessRampPreset, CrimsonPreset)
}


def create_preset(prompt_id: int) -> StylePreset:
    """Factory for editor presets.

    Raises:
        UnknownPresetError: If ``prompt_id`` is not in the catalog
    """
    try:
        return PRESETS[int(prompt_id)]()
    except KeyError:
        raise UnknownPresetError(prompt_id) from None


def preset_catalog() -> str:
    """One line per preset, for CLI help."""
    return "\n".join(f"  {pid}: {cls.name} ({cls.description})" for pid, cls in sorted(PRESETS.items()))
