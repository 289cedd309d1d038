"""Projection, compositing and their analytic gradients."""

from .backward import (
    AccumulateOrder,
    BackwardConfig,
    CacheMissingError,
    NonFiniteGradientError,
    WeightGradient,
    backward,
)
from .gradcheck import gradcheck, squared_error
from .projection import Splat2D, SplatBatch, project, project_world
from .rasterizer import (
    BlendMode,
    RenderOutput,
    alpha_at,
    render,
    render_reference,
    wabe_weight,
    wabe_weight_calls,
)

__all__ = [
    "AccumulateOrder",
    "BackwardConfig",
    "BlendMode",
    "CacheMissingError",
    "NonFiniteGradientError",
    "RenderOutput",
    "Splat2D",
    "SplatBatch",
    "WeightGradient",
    "alpha_at",
    "backward",
    "gradcheck",
    "project",
    "project_world",
    "render",
    "render_reference",
    "squared_error",
    "wabe_weight",
    "wabe_weight_calls",
]
