"""Ablations on the flap scene: weighted blending on/off, adversarial term on/off, beta sweep."""

import logging
from typing import Iterable, List, Optional

import numpy as np

from .editor.oracle import noise_free_target
from .fixtures import BACK_TRIANGLES, OCCLUDED_STEPS, VISIBLE_STEPS, flap_edit_config, flap_jitter_config, flap_scene
from .losses.image import psnr
from .models import (
    AdversarialAblationReport,
    AdversarialRun,
    DriftReport,
    OcclusionAblationReport,
    TrainConfig,
)
from .orchestrator import TrainState, train_loop, training_mode
from .scene import Scene

logger = logging.getLogger(__name__)


def occluded_color_drift(scene: Scene, config: TrainConfig, visible_iterations: int,
                         occluded_iterations: int) -> DriftReport:
    """Train on frames where the back card is visible, then only on frames where it is hidden.

    Drift is the mean absolute change of the back card's colors over the
    second phase, per channel.
    """
    state = TrainState.initial(scene, config)
    rng = np.random.default_rng(config.seed)
    back = np.isin(state.gaussians.parent_triangle, BACK_TRIANGLES)

    train_loop(scene, config, state=state, iterations=visible_iterations, steps=VISIBLE_STEPS, rng=rng)
    learned = state.gaussians.color[back].copy()
    train_loop(scene, config, state=state, iterations=occluded_iterations, steps=OCCLUDED_STEPS, rng=rng)
    drift = np.mean(np.abs(state.gaussians.color[back] - learned), axis=0)
    report = DriftReport(mode=str(training_mode(config)), drift=drift.tolist())
    logger.debug("Occluded drift under %s: %s", report.mode, report.drift)
    return report


def occlusion_ablation(scene: Optional[Scene] = None, config: Optional[TrainConfig] = None,
                       iterations: int = 1000) -> OcclusionAblationReport:
    """Weighted vs standard blending while recoloring the flap scene.

    The adversarial term is disabled so that only the blending differs.
    """
    scene = scene or flap_scene()
    config = (config or flap_edit_config(iterations)).model_copy(update={"adversarial_enabled": False})
    half = iterations // 2
    runs = {}
    for enabled in (True, False):
        cfg = config.model_copy(update={"wabe_enabled": enabled})
        runs[enabled] = occluded_color_drift(scene, cfg, half, iterations - half)
    return OcclusionAblationReport(wabe=runs[True], standard=runs[False])


def beta_sweep(betas: Iterable[float] = (0.0, 2.0, 6.0, 12.0), scene: Optional[Scene] = None,
               iterations: int = 1000, seed: int = 0) -> List[DriftReport]:
    """Occluded drift as a function of the blending sharpness."""
    scene = scene or flap_scene()
    base = flap_edit_config(iterations, seed).model_copy(update={"adversarial_enabled": False})
    half = iterations // 2
    reports = []
    for beta in betas:
        cfg = base.model_copy(update={"wabe_enabled": True, "beta_wabe": float(beta)})
        reports.append(occluded_color_drift(scene, cfg, half, iterations - half))
    return reports


def _grid_psnr(scene: Scene, references) -> float:
    values = [psnr(scene.render_view(v, s).image, references[v][s])
              for v in range(scene.num_views) for s in range(scene.num_steps)]
    return float(np.mean(values))


def adversarial_ablation(seeds: Iterable[int] = range(5), iterations: int = 1000,
                         scene: Optional[Scene] = None) -> AdversarialAblationReport:
    """Jittered identity edits with and without the adversarial term.

    Final Standard-mode renders are scored against the noise-free edit of
    the starting avatar.
    """
    scene = scene or flap_scene()
    runs = []
    frozen = True
    for seed in seeds:
        base = flap_jitter_config(iterations, seed)
        references = [[noise_free_target(img, base.editor) for img in row] for row in scene.render_grid()]
        scores = {}
        for enabled in (True, False):
            cfg = base.model_copy(update={"adversarial_enabled": enabled})
            state = TrainState.initial(scene, cfg)
            before = state.discriminator.checksum()
            result = train_loop(scene, cfg, state=state)
            if not enabled and result.discriminator.checksum() != before:
                frozen = False
            scores[enabled] = _grid_psnr(result.scene, references)
        runs.append(AdversarialRun(seed=seed, psnr_adversarial=scores[True], psnr_plain=scores[False]))
        logger.debug("Seed %d: adversarial %.2f dB, plain %.2f dB", seed, scores[True], scores[False])
    return AdversarialAblationReport(runs=runs, discriminator_frozen_when_disabled=frozen)
