"""CLI entry point for wabe-splat."""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import experiments
from .editor.oracle import noise_free_target
from .editor.presets import preset_catalog
from .evaluation import evaluate
from .fixtures import make_fixtures
from .models import EditSpec, GradcheckSummary, TrainConfig
from .orchestrator import EditOrchestrator
from .render.backward import BackwardConfig, WeightGradient
from .render.gradcheck import gradcheck, squared_error
from .render.rasterizer import DEFAULT_BETA, BlendMode
from .scene import Scene
from .storage.manager import StorageManager, load_run_config, load_scene, resolve_scene_path
from .targets import FixedTargets

console = Console()

THREADS_ENV = "WABE_SPLAT_THREADS"
EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    """Bad command line: exit code 1."""


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def print_banner():
    """Print the application banner."""
    banner = r"""
[bold blue]
 __      __  _    ___  ___     ___ ___ _    _ _____
 \ \    / / /_\  | _ )| __|   / __| _ \ |  /_\_   _|
  \ \/\/ / / _ \ | _ \| _|    \__ \  _/ |_/ _ \| |
   \_/\_/ /_/ \_\|___/|___|   |___/_| |____/_/ \_\_|
[/bold blue]
[cyan]  Occlusion-aware editing of Gaussian avatars[/cyan]
    """
    console.print(banner)


def _common_flags(defaults: bool) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    missing = None if defaults else argparse.SUPPRESS
    parser.add_argument("--seed", type=int, default=missing, help="Random seed (overrides the config's seed)")
    parser.add_argument("--config", type=Path, default=missing, help="Run configuration JSON")
    parser.add_argument("--out", type=Path, default=Path("out") if defaults else missing, help="Output directory")
    parser.add_argument("--threads", type=int, default=missing,
                        help=f"Worker threads (default: ${THREADS_ENV} or 1)")
    parser.add_argument("--verbose", action="store_true", default=False if defaults else missing,
                        help="Debug logging")
    return parser


def build_parser() -> CliParser:
    parser = CliParser(prog="wabe-splat", parents=[_common_flags(True)],
                       description="Differentiable Gaussian splatting with weighted alpha blending",
                       epilog="Editor presets:\n" + preset_catalog(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_flags(False)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text)

    p = add("fit", "Optimize Gaussians to a target scene's renders (no editor)")
    p.add_argument("--scene", type=Path, required=True, help="Initial avatar")
    p.add_argument("--target", type=Path, required=True, help="Scene whose renders are the targets")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--wabe", action="store_true", help="Fit with weighted blending")

    p = add("edit", "Run the render-edit-aggregate loop described by --config")
    p.add_argument("--iterations", type=int, help="Override the configured iteration count")

    for name, text in (("render", "Render an avatar's own timeline"),
                       ("animate", "Render an avatar driven by another scene's timeline")):
        p = add(name, text)
        p.add_argument("--scene", type=Path, required=True)
        if name == "animate":
            p.add_argument("--driver", type=Path, required=True, help="Scene providing the timeline")
        p.add_argument("--mode", choices=["standard", "wabe"], default="standard")
        p.add_argument("--beta", type=float, default=DEFAULT_BETA)
        p.add_argument("--png", action="store_true", help="Also write PNG files")

    p = add("eval", "PSNR, SSIM and flicker excess against reference renders")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--reference", type=Path, required=True, help="Scene rendered as the reference")
    p.add_argument("--prompt", type=int, help="Apply this editor preset (no jitter) to the reference")

    p = add("gradcheck", "Compare analytic and finite-difference gradients")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--mode", choices=["standard", "wabe", "all"], default="all")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--policy", choices=["detached", "full", "all"], default="all")

    add("make-fixtures", "Write the built-in synthetic scenes")

    p = add("ablate", "Run an ablation experiment on the flap scene")
    p.add_argument("experiment", choices=["occlusion", "adversarial", "beta"])
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seeds", type=int, default=5, help="Number of seeds (adversarial)")
    return parser


def resolve_threads(flag: Optional[int]) -> int:
    """``--threads``, then ``$WABE_SPLAT_THREADS``, then 1."""
    if flag is not None:
        value, source = flag, "--threads"
    else:
        raw = os.getenv(THREADS_ENV)
        if not raw:
            return 1
        try:
            value, source = int(raw), THREADS_ENV
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got '{raw}'") from None
    if value < 1:
        raise UsageError(f"{source} must be >= 1, got {value}")
    return value


def _blend_mode(args) -> BlendMode:
    return BlendMode.wabe(args.beta) if args.mode == "wabe" else BlendMode.standard()


def _write_renders(scene: Scene, mode: BlendMode, storage: StorageManager, threads: int, png: bool) -> int:
    count = 0
    for v in range(scene.num_views):
        for s, step in enumerate(scene.timeline):
            image = scene.render_view(v, s, mode, threads=threads).image
            name = f"render_v{v}_t{step.time:03d}"
            storage.save_image(image, f"{name}.ppm")
            if png:
                storage.save_image(image, f"{name}.png")
            count += 1
    return count


def cmd_fit(args, storage: StorageManager, threads: int) -> int:
    init, target = load_scene(args.scene), load_scene(args.target)
    if target.num_views != init.num_views or target.num_steps != init.num_steps:
        raise UsageError("--scene and --target must share the camera/timeline grid")
    config = TrainConfig(
        iterations=args.iterations, learning_rate=args.lr, seed=args.seed or 0, threads=threads,
        adversarial_enabled=False, wabe_enabled=args.wabe,
    )
    references = FixedTargets.from_scene(target)
    storage.reset_metrics()
    result = EditOrchestrator(init, config, storage, console).run(references, label="fit")
    report = evaluate(result.scene, references.images, threads)
    storage.save_report(report, "eval_report.json")
    console.print(f"📊 PSNR {report.psnr:.2f} dB, SSIM {report.ssim:.4f}")
    return EXIT_OK


def cmd_edit(args, storage: StorageManager, threads: int) -> int:
    if args.config is None:
        raise UsageError("edit requires --config")
    run = load_run_config(args.config)
    scene = load_scene(resolve_scene_path(run, args.config))
    updates = {"threads": threads}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.iterations is not None:
        updates["iterations"] = args.iterations
    config = run.train.model_copy(update=updates)
    storage.reset_metrics()
    EditOrchestrator(scene, config, storage, console).run()
    return EXIT_OK


def cmd_render(args, storage: StorageManager, threads: int) -> int:
    scene = load_scene(args.scene)
    if args.command == "animate":
        scene = scene.with_timeline(load_scene(args.driver).timeline)
    count = _write_renders(scene, _blend_mode(args), storage, threads, args.png)
    console.print(f"🖼️  Wrote {count} images to: {storage.out_dir}")
    return EXIT_OK


def cmd_eval(args, storage: StorageManager, threads: int) -> int:
    scene, reference = load_scene(args.scene), load_scene(args.reference)
    images = reference.render_grid(threads=threads)
    if args.prompt is not None:
        spec = EditSpec(prompt_id=args.prompt)
        images = [[noise_free_target(img, spec) for img in row] for row in images]
    report = evaluate(scene, images, threads)

    table = Table(title="Evaluation")
    for column in ("view", "PSNR (dB)", "SSIM", "flicker excess"):
        table.add_column(column, justify="right")
    for m in report.views:
        table.add_row(str(m.view), f"{m.psnr:.2f}", f"{m.ssim:.4f}", f"{m.flicker_excess:+.5f}")
    table.add_row("all", f"{report.psnr:.2f}", f"{report.ssim:.4f}", f"{report.flicker_excess:+.5f}", style="bold")
    console.print(table)
    path = storage.save_report(report, "eval_report.json")
    console.print(f"💾 Saved report to: {path}")
    return EXIT_OK


def cmd_gradcheck(args, storage: StorageManager, threads: int) -> int:
    scene = load_scene(args.scene)
    if not scene.cameras:
        raise UsageError(f"{args.scene} has no cameras")
    camera = scene.cameras[0]
    frames = scene.frames_at(0)
    rng = np.random.default_rng(args.seed or 0)
    loss = squared_error(rng.uniform(0.0, 1.0, size=(camera.height, camera.width, 3)))

    runs = []
    if args.mode in ("standard", "all"):
        runs.append((BlendMode.standard(), WeightGradient.DETACHED))
    if args.mode in ("wabe", "all"):
        policies = [WeightGradient.DETACHED, WeightGradient.FULL] if args.policy == "all" \
            else [WeightGradient(args.policy)]
        runs.extend((BlendMode.wabe(args.beta), p) for p in policies)

    reports = []
    with console.status("Running finite differences..."):
        for mode, policy in runs:
            config = BackwardConfig(wabe_weight_gradient=policy, threads=threads)
            reports.append(gradcheck(scene.gaussians, frames, camera, mode, loss, config))
    summary = GradcheckSummary(scene=str(args.scene), reports=reports)

    table = Table(title=f"Gradient check: {args.scene}")
    table.add_column("blend")
    table.add_column("policy")
    names = list(reports[0].max_rel_error) if reports else []
    for name in names:
        table.add_column(name, justify="right")
    table.add_column("status")
    for r in reports:
        status = "[green]pass[/green]" if r.passed else "[red]FAIL[/red]"
        table.add_row(r.mode, r.policy, *(f"{r.max_rel_error[n]:.2e}" for n in names), status)
    console.print(table)
    storage.save_report(summary, "gradcheck_report.json")
    return EXIT_OK if summary.passed else EXIT_FAILURE


def cmd_make_fixtures(args, storage: StorageManager, threads: int) -> int:
    written = make_fixtures(storage.out_dir, seed=args.seed or 0)
    for name, path in written.items():
        console.print(f"📦 {name}: {path}")
    return EXIT_OK


def cmd_ablate(args, storage: StorageManager, threads: int) -> int:
    if args.experiment == "occlusion":
        report = experiments.occlusion_ablation(iterations=args.iterations)
        console.print(f"🔬 Occluded drift: WABE {report.wabe.worst:.4f}, standard {report.standard.worst:.4f} "
                      f"(ratio {report.ratio:.1f}x)")
    elif args.experiment == "adversarial":
        report = experiments.adversarial_ablation(range(args.seeds), args.iterations)
        for run in report.runs:
            console.print(f"🔬 seed {run.seed}: adversarial {run.psnr_adversarial:.2f} dB, "
                          f"plain {run.psnr_plain:.2f} dB")
        console.print(f"🏁 Adversarial at least as good on {report.wins}/{len(report.runs)} seeds")
    else:
        reports = experiments.beta_sweep(iterations=args.iterations, seed=args.seed or 0)
        for r in reports:
            console.print(f"🔬 {r.mode}: drift {r.worst:.4f}")
        path = storage.out_dir / "beta_sweep.jsonl"
        path.write_text("".join(r.model_dump_json() + "\n" for r in reports), encoding="utf-8")
        console.print(f"💾 Saved sweep to: {path}")
        return EXIT_OK
    storage.save_report(report, f"ablation_{args.experiment}.json")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "edit": cmd_edit,
    "render": cmd_render,
    "animate": cmd_render,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "make-fixtures": cmd_make_fixtures,
    "ablate": cmd_ablate,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv`` and run one subcommand; returns the process exit code."""
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
        threads = resolve_threads(args.threads)
    except UsageError as e:
        console.print(f"[bold red]❌ {e}[/bold red]")
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )
    print_banner()

    try:
        storage = StorageManager(args.out)
        return COMMANDS[args.command](args, storage, threads)
    except UsageError as e:
        console.print(f"[bold red]❌ {e}[/bold red]")
        return EXIT_USAGE
    except KeyboardInterrupt:
        console.print("\n[yellow]⚠️  Interrupted by user[/yellow]")
        return EXIT_OK
    except Exception as e:
        console.print(f"\n[bold red]❌ Fatal error: {e}[/bold red]")
        if args.verbose:
            console.print_exception()
        return EXIT_FAILURE


def main():
    """Main CLI entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
