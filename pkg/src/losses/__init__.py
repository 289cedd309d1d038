"""Reconstruction, binding and total objectives."""

from ..models import LossWeights
from .image import DimensionMismatchError, dssim_loss, l1_loss, mse, psnr, ssim
from .objective import LossRouting, route_loss, total_loss
from .regularizer import const_loss

__all__ = [
    "DimensionMismatchError",
    "LossRouting",
    "LossWeights",
    "const_loss",
    "dssim_loss",
    "l1_loss",
    "mse",
    "psnr",
    "route_loss",
    "ssim",
    "total_loss",
]
