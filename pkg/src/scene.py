"""In-memory avatar scene: rig, bound Gaussians, cameras and a timeline."""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from .avatar.rig import AvatarRig, FrameSet, RigidPose, WorldGaussians, animate, bind_to_world, triangle_frames
from .core import Camera, GaussianSet, check_unit_quaternions
from .models import (
    CameraRecord,
    Gaussian3D,
    RigidPoseRecord,
    RigRecord,
    SceneFile,
    TimelineEntry,
)
from .render.projection import project_world
from .render.rasterizer import TILE_SIZE, BlendMode, RenderOutput, render

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimelineStep:
    """Expression weights and head pose at one timestep."""

    time: int
    expression_weights: np.ndarray
    pose: RigidPose
    pose_name: Optional[str] = None


@dataclass
class Scene:
    rig: AvatarRig
    gaussians: GaussianSet
    cameras: List[Camera]
    timeline: List[TimelineStep]
    poses: Dict[str, RigidPose] = field(default_factory=dict)

    def __post_init__(self):
        if not self.timeline:
            self.timeline = [TimelineStep(0, np.zeros(self.rig.num_blendshapes), RigidPose.identity())]
        if len(self.gaussians) and (self.gaussians.parent_triangle.min() < 0
                                    or self.gaussians.parent_triangle.max() >= len(self.rig.triangles)):
            raise ValueError(f"Gaussian parent_triangle out of range for {len(self.rig.triangles)} triangles")

    @property
    def num_views(self) -> int:
        return len(self.cameras)

    @property
    def num_steps(self) -> int:
        return len(self.timeline)

    def vertices_at(self, step: int) -> np.ndarray:
        entry = self.timeline[step]
        return animate(self.rig, entry.expression_weights, entry.pose)

    def frames_at(self, step: int) -> FrameSet:
        return triangle_frames(self.vertices_at(step), self.rig.triangles)

    def world_at(self, step: int, gaussians: Optional[GaussianSet] = None) -> WorldGaussians:
        return bind_to_world(self.gaussians if gaussians is None else gaussians, self.frames_at(step))

    def render_view(self, view: int, step: int, mode: BlendMode = BlendMode.standard(), *,
                    gaussians: Optional[GaussianSet] = None, tile_size: int = TILE_SIZE,
                    threads: int = 1, cache: bool = False) -> RenderOutput:
        """Animate to ``step``, bind, project into camera ``view`` and composite."""
        camera = self.cameras[view]
        batch = project_world(self.world_at(step, gaussians), camera)
        return render(batch, camera, mode, tile_size=tile_size, threads=threads, cache=cache)

    def render_grid(self, mode: BlendMode = BlendMode.standard(), **kwargs) -> List[List[np.ndarray]]:
        """Images indexed ``[view][step]``."""
        return [[self.render_view(v, s, mode, **kwargs).image for s in range(self.num_steps)]
                for v in range(self.num_views)]

    def with_gaussians(self, gaussians: GaussianSet) -> "Scene":
        return replace(self, gaussians=gaussians)

    def with_timeline(self, timeline: List[TimelineStep]) -> "Scene":
        """Same avatar driven by another timeline (reenactment)."""
        weights = {len(step.expression_weights) for step in timeline}
        if weights - {self.rig.num_blendshapes}:
            raise ValueError(f"Timeline expression weights do not match the rig's "
                             f"{self.rig.num_blendshapes} blendshapes")
        return replace(self, timeline=list(timeline))

    @classmethod
    def from_file(cls, doc: SceneFile) -> "Scene":
        rig = AvatarRig(
            base_vertices=np.array(doc.rig.base_vertices, dtype=np.float64).reshape(-1, 3),
            triangles=np.array(doc.rig.triangles, dtype=np.int64).reshape(-1, 3),
            blendshapes=np.array(doc.rig.blendshapes, dtype=np.float64).reshape(-1, len(doc.rig.base_vertices), 3),
        )
        poses = {name: _pose(record) for name, record in doc.rig.poses.items()}
        records = doc.gaussians
        gaussians = GaussianSet(
            position=[g.position for g in records] or np.zeros((0, 3)),
            rotation=check_unit_quaternions([g.rotation for g in records], "gaussians.rotation"),
            log_scale=[g.log_scale for g in records] or np.zeros((0, 3)),
            opacity_logit=[g.opacity_logit for g in records],
            color=[g.color for g in records] or np.zeros((0, 3)),
            parent_triangle=[g.parent_triangle for g in records],
        )
        cameras = [Camera(fx=c.fx, fy=c.fy, cx=c.cx, cy=c.cy, rotation=c.rotation,
                          translation=c.translation, width=c.width, height=c.height) for c in doc.cameras]
        timeline = []
        for entry in doc.timeline:
            if isinstance(entry.pose, str):
                pose, name = poses[entry.pose], entry.pose
            else:
                pose, name = _pose(entry.pose), None
            timeline.append(TimelineStep(entry.time, np.array(entry.expression_weights, dtype=np.float64),
                                         pose, name))
        return cls(rig=rig, gaussians=gaussians, cameras=cameras, timeline=timeline, poses=poses)

    def to_file(self) -> SceneFile:
        g = self.gaussians
        return SceneFile(
            rig=RigRecord(
                base_vertices=self.rig.base_vertices.tolist(),
                triangles=self.rig.triangles.tolist(),
                blendshapes=self.rig.blendshapes.tolist(),
                poses={name: _pose_record(pose) for name, pose in self.poses.items()},
            ),
            gaussians=[
                Gaussian3D(
                    position=g.position[i].tolist(),
                    rotation=g.rotation[i].tolist(),
                    log_scale=g.log_scale[i].tolist(),
                    opacity_logit=float(g.opacity_logit[i]),
                    color=g.color[i].tolist(),
                    parent_triangle=int(g.parent_triangle[i]),
                )
                for i in range(len(g))
            ],
            cameras=[
                CameraRecord(fx=c.fx, fy=c.fy, cx=c.cx, cy=c.cy, rotation=c.rotation.tolist(),
                             translation=c.translation.tolist(), width=c.width, height=c.height)
                for c in self.cameras
            ],
            timeline=[
                TimelineEntry(time=s.time, expression_weights=s.expression_weights.tolist(),
                              pose=s.pose_name if s.pose_name is not None else _pose_record(s.pose))
                for s in self.timeline
            ],
        )


def _pose(record: RigidPoseRecord) -> RigidPose:
    return RigidPose(rotation=np.array(record.rotation, dtype=np.float64),
                     translation=np.array(record.translation, dtype=np.float64))


def _pose_record(pose: RigidPose) -> RigidPoseRecord:
    return RigidPoseRecord(rotation=np.asarray(pose.rotation).tolist(),
                           translation=np.asarray(pose.translation).tolist())
