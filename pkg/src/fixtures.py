"""Built-in synthetic scenes used by the tests, ablations and ``make-fixtures``."""

import logging
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from .avatar.rig import AvatarRig, RigidPose, triangle_frames
from .core import Camera, GaussianSet, normalize_quaternions
from .models import EditSpec, RunConfig, TrainConfig
from .scene import Scene, TimelineStep
from .storage.manager import save_run_config, save_scene

logger = logging.getLogger(__name__)

IMAGE_SIZE = 64
FOCAL = 80.0
CAMERA_DISTANCE = 4.0

# flap scene layout
BACK_TRIANGLES = (0, 1)
FLAP_TRIANGLES = (2, 3)
FLAP_OPENING = (0.0, 0.0, 0.5, 1.0, 1.0, 0.5, 0.0, 0.0)
OCCLUDED_STEPS = tuple(i for i, w in enumerate(FLAP_OPENING) if w == 0.0)
VISIBLE_STEPS = tuple(i for i, w in enumerate(FLAP_OPENING) if w == 1.0)
CRIMSON_PRESET = 4


def _rotation_x(degrees: float) -> np.ndarray:
    a = np.deg2rad(degrees)
    return np.array([[1.0, 0.0, 0.0], [0.0, np.cos(a), -np.sin(a)], [0.0, np.sin(a), np.cos(a)]])


def _rotation_y(degrees: float) -> np.ndarray:
    a = np.deg2rad(degrees)
    return np.array([[np.cos(a), 0.0, np.sin(a)], [0.0, 1.0, 0.0], [-np.sin(a), 0.0, np.cos(a)]])


def orbit_camera(yaw: float = 0.0, pitch: float = 0.0, distance: float = CAMERA_DISTANCE,
                 size: int = IMAGE_SIZE, focal: float = FOCAL) -> Camera:
    """Camera looking at the world origin from ``distance``, rotated by yaw then pitch (degrees)."""
    center = (size - 1) / 2.0
    return Camera(fx=focal, fy=focal, cx=center, cy=center, rotation=_rotation_x(pitch) @ _rotation_y(yaw),
                  translation=[0.0, 0.0, distance], width=size, height=size)


def _focal(size: int) -> float:
    """Focal length keeping the default field of view at another image size."""
    return FOCAL * size / IMAGE_SIZE


def quad(z: float, half: float, x0: float = 0.0, y0: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Axis-aligned square facing -z as four vertices and two triangles."""
    vertices = np.array([
        [x0 - half, y0 - half, z],
        [x0 + half, y0 - half, z],
        [x0 + half, y0 + half, z],
        [x0 - half, y0 + half, z],
    ])
    return vertices, np.array([[0, 1, 2], [0, 2, 3]])


def _containing_triangle(point: np.ndarray, vertices: np.ndarray, triangles: np.ndarray,
                         candidates: Sequence[int]) -> int:
    for t in candidates:
        a, b, c = vertices[triangles[t]][:, :2]
        m = np.column_stack([b - a, c - a])
        u, v = np.linalg.solve(m, point[:2] - a)
        if u >= -1e-9 and v >= -1e-9 and u + v <= 1.0 + 1e-9:
            return int(t)
    raise ValueError(f"Point {point} lies outside triangles {list(candidates)}")


def bind_points(points: np.ndarray, vertices: np.ndarray, triangles: np.ndarray, candidates: Sequence[int], *,
                world_sigma: float, flatness: float, opacity_logit: float,
                color: Callable[[np.ndarray], np.ndarray], rng: np.random.Generator) -> GaussianSet:
    """Gaussians at world ``points``, expressed in the frames of the triangles containing them."""
    frames = triangle_frames(vertices, triangles)
    parents = np.array([_containing_triangle(p, vertices, triangles, candidates) for p in points], dtype=np.int64)
    R_f = frames.rotation[parents]
    k = frames.scale[parents]
    local = np.einsum("nji,nj->ni", R_f, points - frames.origin[parents]) / k[:, None]
    angle = rng.uniform(0.0, np.pi, size=len(points))
    rotation = np.stack([np.cos(angle / 2), np.zeros_like(angle), np.zeros_like(angle), np.sin(angle / 2)], axis=1)
    aniso = np.array([1.0, 0.7, flatness])
    log_scale = np.log(world_sigma * aniso[None, :] / k[:, None])
    return GaussianSet(
        position=local,
        rotation=rotation,
        log_scale=log_scale,
        opacity_logit=np.full(len(points), float(opacity_logit)),
        color=np.array([np.clip(color(p), 0.0, 1.0) for p in points]).reshape(-1, 3),
        parent_triangle=parents,
    )


def grid_points(z: float, half: float, per_side: int, rng: np.random.Generator, jitter: float = 0.25,
                x0: float = 0.0) -> np.ndarray:
    """Jittered grid strictly inside a square."""
    step = 2.0 * half / per_side
    centers = -half + step * (np.arange(per_side) + 0.5)
    xs, ys = np.meshgrid(centers, centers, indexing="xy")
    pts = np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1)
    pts = pts + rng.uniform(-jitter, jitter, size=pts.shape) * step
    pts = np.clip(pts, -half + 1e-6, half - 1e-6)
    pts[:, 0] += x0
    return np.column_stack([pts, np.full(len(pts), z)])


def _merge(parts: List[GaussianSet]) -> GaussianSet:
    return GaussianSet(
        position=np.concatenate([p.position for p in parts]),
        rotation=np.concatenate([p.rotation for p in parts]),
        log_scale=np.concatenate([p.log_scale for p in parts]),
        opacity_logit=np.concatenate([p.opacity_logit for p in parts]),
        color=np.concatenate([p.color for p in parts]),
        parent_triangle=np.concatenate([p.parent_triangle for p in parts]),
    )


def _static_timeline(num_blendshapes: int) -> List[TimelineStep]:
    return [TimelineStep(0, np.zeros(num_blendshapes), RigidPose.identity())]


def two_layer_scene(seed: int = 0) -> Scene:
    """A red front card half-covering a blue back card."""
    rng = np.random.default_rng(seed)
    back_v, back_t = quad(0.5, 1.0)
    front_v, front_t = quad(-0.5, 0.6, x0=-0.3)
    vertices = np.concatenate([back_v, front_v])
    triangles = np.concatenate([back_t, front_t + 4])
    back = bind_points(grid_points(0.5, 1.0, 7, rng), vertices, triangles, (0, 1), world_sigma=0.15,
                       flatness=0.3, opacity_logit=2.0, color=lambda p: np.array([0.1, 0.2, 0.9]), rng=rng)
    front = bind_points(grid_points(-0.5, 0.6, 5, rng, x0=-0.3), vertices, triangles, (2, 3), world_sigma=0.13,
                        flatness=0.3, opacity_logit=2.5, color=lambda p: np.array([0.9, 0.15, 0.1]), rng=rng)
    rig = AvatarRig(base_vertices=vertices, triangles=triangles, blendshapes=np.zeros((0, 8, 3)))
    return Scene(rig=rig, gaussians=_merge([back, front]), cameras=[orbit_camera()],
                 timeline=_static_timeline(0))


def random_scene(seed: int, count: int = 5, size: int = IMAGE_SIZE) -> Scene:
    """Anisotropic, randomly rotated Gaussians on a single card, for gradient checks."""
    rng = np.random.default_rng(seed)
    vertices, triangles = quad(0.0, 1.0)
    frames = triangle_frames(vertices, triangles)
    parents = rng.integers(0, 2, size=count)
    k = frames.scale[parents]
    sigma = rng.uniform(0.08, 0.2, size=(count, 3))
    sigma[:, 2] *= rng.uniform(0.3, 1.0, size=count)
    gaussians = GaussianSet(
        position=np.column_stack([rng.uniform(-0.4, 0.4, size=(count, 2)), rng.uniform(-0.15, 0.15, size=count)]),
        rotation=normalize_quaternions(rng.normal(size=(count, 4))),
        log_scale=np.log(sigma / k[:, None]),
        opacity_logit=rng.uniform(-1.0, 1.5, size=count),
        color=rng.uniform(0.1, 0.9, size=(count, 3)),
        parent_triangle=parents,
    )
    camera = orbit_camera(yaw=float(rng.uniform(-15, 15)), pitch=float(rng.uniform(-10, 10)), size=size)
    rig = AvatarRig(base_vertices=vertices, triangles=triangles, blendshapes=np.zeros((0, 4, 3)))
    return Scene(rig=rig, gaussians=gaussians, cameras=[camera], timeline=_static_timeline(0))


def _pattern(p: np.ndarray) -> np.ndarray:
    x, y = p[0], p[1]
    return 0.5 + 0.4 * np.array([np.sin(3.0 * x), np.cos(3.0 * y), np.sin(2.0 * (x + y))])


FIT_VIEWS = ((-25.0, 5.0), (-8.0, -10.0), (8.0, 10.0), (25.0, -5.0))


def fit_scenes(seed: int = 0, count: int = 200, size: int = IMAGE_SIZE) -> Tuple[Scene, Scene]:
    """(initial, target) pair on a two-triangle card seen from four views.

    The initial avatar starts gray with perturbed geometry and opacity.
    """
    rng = np.random.default_rng(seed)
    vertices, triangles = quad(0.0, 1.0)
    per_side = int(round(np.sqrt(count)))
    points = grid_points(0.0, 1.0, per_side, rng)
    points = np.concatenate([points, grid_points(0.0, 1.0, per_side, rng)])[:count]
    target = bind_points(points, vertices, triangles, (0, 1), world_sigma=0.1, flatness=0.3,
                         opacity_logit=2.0, color=_pattern, rng=rng)
    init = target.copy()
    init.color[:] = 0.5
    init.opacity_logit -= 0.5
    init.position[:, :2] += rng.normal(0.0, 0.02, size=(count, 2))
    init.log_scale += rng.normal(0.0, 0.1, size=(count, 3))
    rig = AvatarRig(base_vertices=vertices, triangles=triangles, blendshapes=np.zeros((0, 4, 3)))
    cameras = [orbit_camera(yaw, pitch, size=size, focal=_focal(size)) for yaw, pitch in FIT_VIEWS]

    def make(gaussians: GaussianSet) -> Scene:
        return Scene(rig=rig, gaussians=gaussians, cameras=cameras, timeline=_static_timeline(0))

    return make(init), make(target)


def flap_scene(seed: int = 0, size: int = IMAGE_SIZE) -> Scene:
    """A back card hidden behind a front flap that slides aside and back over eight timesteps."""
    rng = np.random.default_rng(seed)
    back_v, back_t = quad(0.3, 0.9)
    flap_v, flap_t = quad(-0.3, 1.1)
    vertices = np.concatenate([back_v, flap_v])
    triangles = np.concatenate([back_t, flap_t + 4])
    slide = np.zeros((1, 8, 3))
    slide[0, 4:, 0] = 2.8
    back = bind_points(grid_points(0.3, 0.9, 8, rng), vertices, triangles, BACK_TRIANGLES, world_sigma=0.13,
                       flatness=0.3, opacity_logit=2.0, color=lambda p: np.array([0.9, 0.9, 0.8]), rng=rng)
    flap = bind_points(grid_points(-0.3, 1.1, 11, rng), vertices, triangles, FLAP_TRIANGLES, world_sigma=0.14,
                       flatness=0.3, opacity_logit=1.5, color=lambda p: np.array([0.85, 0.65, 0.55]), rng=rng)
    rig = AvatarRig(base_vertices=vertices, triangles=triangles, blendshapes=slide)
    timeline = [TimelineStep(t, np.array([w]), RigidPose.identity()) for t, w in enumerate(FLAP_OPENING)]
    cameras = [orbit_camera(yaw, size=size, focal=_focal(size)) for yaw in (-10.0, 10.0)]
    return Scene(rig=rig, gaussians=_merge([back, flap]), cameras=cameras, timeline=timeline)


def flap_edit_config(iterations: int = 1000, seed: int = 0) -> TrainConfig:
    return TrainConfig(iterations=iterations, seed=seed, editor=EditSpec(prompt_id=CRIMSON_PRESET))


def flap_jitter_config(iterations: int = 1000, seed: int = 0) -> TrainConfig:
    return TrainConfig(iterations=iterations, seed=seed, adversarial_enabled=True,
                       editor=EditSpec(prompt_id=0, jitter_sigma=0.1, seed=seed))


def make_fixtures(out_dir: Path, seed: int = 0) -> Dict[str, Path]:
    """Write every built-in fixture into ``out_dir``."""
    out_dir = Path(out_dir)
    fit_init, fit_target = fit_scenes(seed)
    written = {
        "two_layer": save_scene(two_layer_scene(seed), out_dir / "two_layer.json"),
        "random5": save_scene(random_scene(seed, 5), out_dir / "random5.json"),
        "fit_init": save_scene(fit_init, out_dir / "fit_init.json"),
        "fit_target": save_scene(fit_target, out_dir / "fit_target.json"),
        "flap": save_scene(flap_scene(seed), out_dir / "flap.json"),
        "flap_edit": save_run_config(RunConfig(scene="flap.json", train=flap_edit_config(seed=seed)),
                                     out_dir / "flap_edit.json"),
        "flap_jitter": save_run_config(RunConfig(scene="flap.json", train=flap_jitter_config(seed=seed)),
                                       out_dir / "flap_jitter.json"),
    }
    logger.debug("Wrote %d fixtures to %s", len(written), out_dir)
    return written
