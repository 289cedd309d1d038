"""Inference-time quality and temporal-consistency metrics."""

import logging
from typing import Sequence

import numpy as np

from .core import ImageBuffer
from .losses.image import psnr, ssim
from .models import EvalReport, ViewMetrics
from .render.rasterizer import BlendMode
from .scene import Scene

logger = logging.getLogger(__name__)


class GridMismatchError(ValueError):
    """Raised when reference targets do not align with the camera/timeline grid."""


def mean_temporal_delta(frames: Sequence[ImageBuffer]) -> float:
    """Mean L1 between consecutive frames (0 for fewer than two frames)."""
    if len(frames) < 2:
        return 0.0
    return float(np.mean([np.mean(np.abs(b - a)) for a, b in zip(frames[:-1], frames[1:])]))


def evaluate(scene: Scene, references: Sequence[Sequence[ImageBuffer]], threads: int = 1) -> EvalReport:
    """Compare Standard-mode renders of every (view, step) against references.

    Args:
        scene: Avatar with the cameras and timeline to render
        references: Images indexed ``[view][step]``
        threads: Rasterizer worker threads

    Returns:
        EvalReport: Per-view PSNR/SSIM averaged over timesteps, flicker
        excess, and their means over views
    """
    if len(references) != scene.num_views:
        raise GridMismatchError(f"{len(references)} reference views for {scene.num_views} cameras")
    views = []
    for v, row in enumerate(references):
        if len(row) != scene.num_steps:
            raise GridMismatchError(f"View {v} has {len(row)} reference frames for {scene.num_steps} timesteps")
        renders = [scene.render_view(v, s, BlendMode.standard(), threads=threads).image
                   for s in range(scene.num_steps)]
        refs = [np.asarray(img, dtype=np.float64) for img in row]
        for s, (img, ref) in enumerate(zip(renders, refs)):
            if img.shape != ref.shape:
                raise GridMismatchError(f"Reference [{v}][{s}] has shape {ref.shape}, render has {img.shape}")
        views.append(ViewMetrics(
            view=v,
            psnr=float(np.mean([psnr(img, ref) for img, ref in zip(renders, refs)])),
            ssim=float(np.mean([ssim(img, ref) for img, ref in zip(renders, refs)])),
            flicker_excess=mean_temporal_delta(renders) - mean_temporal_delta(refs),
        ))
    report = EvalReport(
        views=views,
        psnr=float(np.mean([m.psnr for m in views])) if views else 0.0,
        ssim=float(np.mean([m.ssim for m in views])) if views else 0.0,
        flicker_excess=float(np.mean([m.flicker_excess for m in views])) if views else 0.0,
    )
    logger.debug("Evaluation: PSNR %.2f dB, SSIM %.4f", report.psnr, report.ssim)
    return report
