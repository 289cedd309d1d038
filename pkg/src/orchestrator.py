"""Render-edit-aggregate training loop."""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn

from .adversarial.discriminator import Discriminator
from .adversarial.pairs import d_loss, g_loss, make_pairs
from .core import GaussianSet
from .losses.image import dssim_loss, l1_loss
from .losses.objective import total_loss
from .losses.regularizer import const_loss
from .models import BlendPolicy, StepMetrics, TrainConfig
from .optim import Adam
from .render.backward import BackwardConfig, WeightGradient, backward
from .render.rasterizer import BlendMode
from .scene import Scene
from .targets import EditorTargets, TargetSource

if TYPE_CHECKING:
    from .storage.manager import StorageManager

logger = logging.getLogger(__name__)

DISCRIMINATOR_SEED_OFFSET = 1


class TrainingDivergedError(RuntimeError):
    """Raised when a loss term or gradient stops being finite."""

    def __init__(self, term: str, iteration: int, value: float = math.nan):
        super().__init__(f"Non-finite {term} ({value}) at iteration {iteration}")
        self.term = term
        self.iteration = iteration


@dataclass
class TrainState:
    """Everything one optimization step reads and mutates."""

    scene: Scene
    optimizer: Adam
    discriminator: Discriminator
    disc_optimizer: Adam
    iteration: int = 0

    @property
    def gaussians(self) -> GaussianSet:
        return self.scene.gaussians

    @classmethod
    def initial(cls, scene: Scene, config: TrainConfig) -> "TrainState":
        """Fresh optimizers and a seeded discriminator; the scene's Gaussians are copied."""
        disc_seed = config.discriminator_seed
        if disc_seed is None:
            disc_seed = config.seed + DISCRIMINATOR_SEED_OFFSET
        return cls(
            scene=scene.with_gaussians(scene.gaussians.copy()),
            optimizer=Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps),
            discriminator=Discriminator(seed=disc_seed),
            disc_optimizer=Adam(config.learning_rate * config.discriminator_lr_scale,
                                config.adam_beta1, config.adam_beta2, config.adam_eps),
        )


@dataclass
class TrainResult:
    scene: Scene
    discriminator: Discriminator
    history: List[StepMetrics] = field(default_factory=list)


def training_mode(config: TrainConfig) -> BlendMode:
    return BlendMode.wabe(config.beta_wabe) if config.wabe_enabled else BlendMode.standard()


def backward_config(config: TrainConfig) -> BackwardConfig:
    policy = (WeightGradient.FULL if config.wabe_weight_gradient == BlendPolicy.FULL
              else WeightGradient.DETACHED)
    return BackwardConfig(wabe_weight_gradient=policy, threads=config.threads)


def sample_frame(rng: np.random.Generator, num_views: int, num_steps: int,
                 steps: Optional[Sequence[int]] = None):
    """Uniform (view, step) plus an adjacent step; endpoints use their single neighbor."""
    view = int(rng.integers(num_views))
    step = int(rng.choice(steps)) if steps is not None else int(rng.integers(num_steps))
    if num_steps == 1:
        neighbor = step
    elif step == 0:
        neighbor = 1
    elif step == num_steps - 1:
        neighbor = step - 1
    else:
        neighbor = step + (1 if rng.integers(2) else -1)
    return view, step, neighbor


def _finite(term: str, value: float, iteration: int) -> float:
    if not math.isfinite(value):
        raise TrainingDivergedError(term, iteration, value)
    return value


def train_step(state: TrainState, config: TrainConfig, rng: np.random.Generator,
               targets: TargetSource, steps: Optional[Sequence[int]] = None) -> StepMetrics:
    """One render-edit-aggregate iteration.

    Args:
        state: Avatar, optimizers and discriminator (mutated in place)
        config: Training configuration
        rng: Seeded sampler for (view, time)
        targets: Supervision source
        steps: Restrict sampled timesteps to these timeline indices

    Returns:
        StepMetrics: Every loss term of this iteration

    Raises:
        TrainingDivergedError: If a loss term or the gradient is not finite
    """
    started = time.perf_counter()
    it = state.iteration + 1
    scene = state.scene
    weights = config.weights
    mode = training_mode(config)

    view, step, neighbor = sample_frame(rng, scene.num_views, scene.num_steps, steps)
    output = scene.render_view(view, step, mode, tile_size=config.tile_size, threads=config.threads, cache=True)
    rendered = output.image
    target_t = targets.target(rendered, view, step)

    l1, g_l1 = l1_loss(rendered, target_t)
    dssim, g_dssim = dssim_loss(rendered, target_t)
    recon = _finite("reconstruction loss", l1 + dssim, it)
    pixel_grad = weights.lambda1 * (g_l1 + g_dssim)

    gen_value = disc_value = None
    if config.adversarial_enabled:
        neighbor_render = None
        if targets.uses_render:
            neighbor_render = scene.render_view(view, neighbor, mode, tile_size=config.tile_size,
                                                threads=config.threads).image
        target_k = targets.target(neighbor_render, view, neighbor)
        real, fake = make_pairs(target_t, target_k, rendered)
        gen_value, g_pixels = g_loss(state.discriminator, fake)
        _finite("generator loss", gen_value, it)
        pixel_grad = pixel_grad + weights.lambda3 * g_pixels
        disc_value, disc_grads = d_loss(state.discriminator, real, fake)
        _finite("discriminator loss", disc_value, it)

    grads = backward(output, pixel_grad, mode, backward_config(config))
    const_value, const_grads = const_loss(state.gaussians)
    _finite("binding constraint loss", const_value, it)
    grads.add_(const_grads, weights.lambda4)
    if not grads.is_finite():
        raise TrainingDivergedError("Gaussian gradient", it)

    state.optimizer.step(state.gaussians.parameters(), grads.as_dict())
    state.gaussians.enforce_constraints()

    if config.adversarial_enabled:
        scaled = {name: weights.lambda2 * g for name, g in disc_grads.items()}
        state.disc_optimizer.step(state.discriminator.parameters(), scaled)
        if not state.discriminator.is_finite():
            raise TrainingDivergedError("discriminator parameters", it)

    state.iteration = it
    total = total_loss(recon, disc_value or 0.0, gen_value or 0.0, const_value, weights)
    metrics = StepMetrics(
        iteration=it, view=view, time=scene.timeline[step].time, neighbor_time=scene.timeline[neighbor].time,
        l1=l1, dssim=dssim, recon=recon, const=const_value, g_loss=gen_value, d_loss=disc_value,
        total=total, wall_clock=time.perf_counter() - started,
    )
    logger.debug("iter %d view %d t=%d: recon=%.5f const=%.5f g=%s d=%s", it, view, metrics.time,
                 recon, const_value, gen_value, disc_value)
    return metrics


def train_loop(scene: Scene, config: TrainConfig, *, targets: Optional[TargetSource] = None,
               storage: Optional["StorageManager"] = None, state: Optional[TrainState] = None,
               iterations: Optional[int] = None, steps: Optional[Sequence[int]] = None,
               rng: Optional[np.random.Generator] = None, show_progress: bool = False) -> TrainResult:
    """Run ``config.iterations`` training steps.

    Args:
        scene: Starting avatar (not mutated)
        config: Training configuration
        targets: Supervision; defaults to the editor oracle of ``config.editor``
        storage: Where checkpoints and metrics go (nothing is written when None)
        state: Continue from an existing state instead of a fresh one
        iterations: Override ``config.iterations``
        steps: Restrict sampled timesteps to these timeline indices
        rng: Sampler to continue from; seeded from ``config.seed`` when None
        show_progress: Draw a rich progress bar

    Returns:
        TrainResult: Final avatar, discriminator and metrics history
    """
    state = state or TrainState.initial(scene, config)
    targets = targets or EditorTargets.for_scene(config.editor, state.scene)
    rng = rng or np.random.default_rng(config.seed)
    count = config.iterations if iterations is None else iterations
    history: List[StepMetrics] = []

    def checkpoint():
        if storage is not None:
            storage.save_checkpoint(state.iteration, state.scene, state.discriminator)

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        transient=True,
        disable=not show_progress,
    ) as progress:
        task = progress.add_task("Training", total=count)
        for _ in range(count):
            metrics = train_step(state, config, rng, targets, steps)
            history.append(metrics)
            if storage is not None:
                storage.append_metrics(metrics)
            if config.checkpoint_every and state.iteration % config.checkpoint_every == 0:
                checkpoint()
            progress.update(task, advance=1, description=f"Training (recon {metrics.recon:.4f})")

    if count and (not config.checkpoint_every or state.iteration % config.checkpoint_every):
        checkpoint()
    return TrainResult(scene=state.scene, discriminator=state.discriminator, history=history)


class EditOrchestrator:
    """Runs a training job end to end and reports progress on the console."""

    def __init__(self, scene: Scene, config: TrainConfig, storage: Optional["StorageManager"] = None,
                 console: Optional[Console] = None):
        self.scene = scene
        self.config = config
        self.storage = storage
        self.console = console or Console()

    def run(self, targets: Optional[TargetSource] = None, label: str = "edit") -> TrainResult:
        cfg = self.config
        self.console.print(f"[bold cyan]🎨 Starting {label}: {cfg.iterations} iterations, "
                           f"{len(self.scene.gaussians)} Gaussians, {self.scene.num_views} views, "
                           f"{self.scene.num_steps} timesteps[/bold cyan]\n")
        mode = training_mode(cfg)
        self.console.print(f"🧮 Blending: {mode}   Adversarial: {'on' if cfg.adversarial_enabled else 'off'}\n")

        result = train_loop(self.scene, cfg, targets=targets, storage=self.storage, show_progress=True)

        if result.history:
            last = result.history[-1]
            self.console.print(f"📉 Final reconstruction loss {last.recon:.5f}, total {last.total:.5f}\n")
        if self.storage is not None:
            path = self.storage.save_scene(result.scene, self.storage.out_dir / "final.json")
            self.console.print(f"💾 Saved final avatar to: {path}\n")
        self.console.print(f"[bold green]✅ {label} completed successfully![/bold green]")
        return result
