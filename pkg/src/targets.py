"""Supervision sources for the training loop."""

from abc import ABC, abstractmethod
from typing import List, Optional, Sequence

import numpy as np

from .core import ImageBuffer, check_image
from .editor.oracle import edit
from .models import EditSpec
from .scene import Scene


class TargetSource(ABC):
    """Produces the supervision image for one (view, timestep)."""

    #: whether ``target`` reads the current render
    uses_render: bool = True

    @abstractmethod
    def target(self, rendered: Optional[ImageBuffer], view: int, step: int) -> ImageBuffer:
        """Target image for a frame.

        Args:
            rendered: Current render of the frame (may be None when
                ``uses_render`` is False)
            view: Camera index
            step: Timeline index

        Returns:
            ImageBuffer: Constant supervision for this iteration
        """
        pass


class EditorTargets(TargetSource):
    """Edited versions of the current renders (render-edit-aggregate)."""

    def __init__(self, spec: EditSpec, times: Sequence[int]):
        self.spec = spec
        self.times = list(times)

    @classmethod
    def for_scene(cls, spec: EditSpec, scene: Scene) -> "EditorTargets":
        return cls(spec, [step.time for step in scene.timeline])

    def target(self, rendered: Optional[ImageBuffer], view: int, step: int) -> ImageBuffer:
        if rendered is None:
            raise ValueError("EditorTargets needs the current render")
        return edit(rendered, self.spec, view, self.times[step])


class FixedTargets(TargetSource):
    """Pre-computed images indexed ``[view][step]``."""

    uses_render = False

    def __init__(self, images: Sequence[Sequence[ImageBuffer]]):
        self.images: List[List[np.ndarray]] = [[check_image(img, f"target[{v}][{s}]") for s, img in enumerate(row)]
                                               for v, row in enumerate(images)]

    @classmethod
    def from_scene(cls, scene: Scene) -> "FixedTargets":
        """Standard-mode renders of another scene over its own camera/timeline grid."""
        return cls(scene.render_grid())

    def target(self, rendered: Optional[ImageBuffer], view: int, step: int) -> ImageBuffer:
        return self.images[view][step]
