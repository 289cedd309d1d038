"""Mesh-bound avatar rig."""

from .rig import (
    AvatarRig,
    DegenerateTriangleError,
    FrameSet,
    RigError,
    RigidPose,
    TriangleFrame,
    WorldGaussians,
    animate,
    bind_backward,
    bind_gaussian,
    bind_to_world,
    triangle_frame,
    triangle_frames,
)

__all__ = [
    "AvatarRig",
    "DegenerateTriangleError",
    "FrameSet",
    "RigError",
    "RigidPose",
    "TriangleFrame",
    "WorldGaussians",
    "animate",
    "bind_backward",
    "bind_gaussian",
    "bind_to_world",
    "triangle_frame",
    "triangle_frames",
]
